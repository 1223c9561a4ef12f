#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sdi/baselines.hpp"
#include "sdi/binary_io.hpp"
#include "sdi/datasets.hpp"
#include "sdi/error.hpp"
#include "sdi/eval.hpp"
#include "sdi/kinematics.hpp"
#include "sdi/service.hpp"
#include "sdi/sim.hpp"
#include "sdi/solver.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sdi;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

/// Output hashes are keyed by path relative to the output directory so two
/// runs into different directories can be compared directly.
class Manifest {
 public:
  Manifest(std::string command, fs::path out_dir) : command_(std::move(command)), out_(std::move(out_dir)) {}

  json& config() { return config_; }
  void seed(const std::string& name, std::uint64_t value) { seeds_[name] = value; }
  void input(const fs::path& path) {
    inputs_.push_back({{"path", path.string()}, {"sha256", io::sha256_file(path)}});
  }
  void output(const fs::path& name) {
    outputs_.push_back({{"path", name.generic_string()}, {"sha256", io::sha256_file(out_ / name)}});
  }
  void timing(const std::string& name, double seconds) { timings_[name] = seconds; }

  void write() const {
    json doc = {{"command", command_}, {"config", config_},  {"seeds", seeds_},
                {"inputs", inputs_},   {"outputs", outputs_}, {"timings", timings_}};
    io::write_text_file(out_ / "manifest.json", doc.dump(2) + "\n");
  }

 private:
  std::string command_;
  fs::path out_;
  json config_ = json::object();
  json seeds_ = json::object();
  json inputs_ = json::array();
  json outputs_ = json::array();
  json timings_ = json::object();
};

struct SceneArg {
  datasets::SceneSpec scene;
  std::optional<fs::path> file;
};

SceneArg resolve_scene(const std::string& arg, std::uint64_t scene_seed) {
  const fs::path p(arg);
  if (p.extension() == ".json") {
    if (!fs::exists(p)) throw Error(ErrorCode::kIo, "scene file not found: " + arg);
    return {datasets::load_scene(p), p};
  }
  const auto& names = datasets::scene_names();
  if (std::find(names.begin(), names.end(), arg) == names.end()) {
    throw Error(ErrorCode::kConfiguration, "unknown scene '" + arg + "' (not a builtin name or .json file)");
  }
  return {datasets::generate_scene(arg, scene_seed), std::nullopt};
}

struct TrainFlags {
  sim::TrainConfig train;
  eval::SceneFitOptions fit;

  void add(CLI::App* app) {
    app->add_option("--epochs", train.epochs, "training epochs")->capture_default_str();
    app->add_option("--batch-size", train.batch_size, "positives per batch")->capture_default_str();
    app->add_option("--lr", train.learning_rate, "AdamW learning rate")->capture_default_str();
    app->add_option("--weight-decay", train.weight_decay, "AdamW weight decay")->capture_default_str();
    app->add_option("--padding", train.padding, "negative box padding (ROI map)")->capture_default_str();
    app->add_option("--negative-ratio", train.negative_ratio, "negatives per positive")->capture_default_str();
    app->add_option("--constraint-padding", fit.constraint_padding, "negative box padding (constraint map)")
        ->capture_default_str();
    app->add_option("--max-points", fit.max_points, "training points per map")->capture_default_str();
  }

  json snapshot() const {
    return {{"epochs", train.epochs},
            {"batch_size", train.batch_size},
            {"learning_rate", train.learning_rate},
            {"weight_decay", train.weight_decay},
            {"padding", train.padding},
            {"negative_ratio", train.negative_ratio},
            {"hidden", train.hidden},
            {"first_layer_scale", train.first_layer_scale},
            {"average_fraction", train.average_fraction},
            {"relative_scale_floor", train.relative_scale_floor},
            {"constraint_padding", fit.constraint_padding},
            {"max_points", fit.max_points}};
  }
};

struct SolverFlags {
  solver::SolverConfig config;
  std::optional<double> z_min, z_max, omega_min, omega_max;
  std::string resampling = "fresh";
  int restarts = 1;

  void add(CLI::App* app) {
    app->add_option("--step", config.step, "gradient step alpha")->capture_default_str();
    app->add_option("--samples", config.samples, "joint samples per step N")->capture_default_str();
    app->add_option("--iterations", config.iterations, "solver iterations")->capture_default_str();
    app->add_option("--project-iterations", config.project_iterations, "projection iterations")
        ->capture_default_str();
    app->add_option("--epsilon", config.epsilon, "projection tolerance")->capture_default_str();
    app->add_option("--tau", config.tau, "feasibility threshold")->capture_default_str();
    app->add_option("--z-min", z_min, "base height lower limit (default: scene)");
    app->add_option("--z-max", z_max, "base height upper limit (default: scene)");
    app->add_option("--omega-min", omega_min, "yaw lower limit (default: scene)");
    app->add_option("--omega-max", omega_max, "yaw upper limit (default: scene)");
    app->add_option("--resampling", resampling, "fresh or fixed")
        ->check(CLI::IsMember({"fresh", "fixed"}))
        ->capture_default_str();
    app->add_option("--restarts", restarts, "random restarts")->capture_default_str();
  }

  solver::SolverConfig resolve(const datasets::Limits& limits, std::uint64_t seed) const {
    solver::SolverConfig c = eval::with_scene_limits(config, limits);
    if (z_min) c.z_min = *z_min;
    if (z_max) c.z_max = *z_max;
    if (omega_min) c.omega_min = *omega_min;
    if (omega_max) c.omega_max = *omega_max;
    c.resampling = resampling == "fixed" ? solver::Resampling::kFixed : solver::Resampling::kFresh;
    c.seed = seed;
    c.validate();
    return c;
  }

  static json snapshot(const solver::SolverConfig& c, int restarts) {
    return {{"step", c.step},
            {"samples", c.samples},
            {"iterations", c.iterations},
            {"project_iterations", c.project_iterations},
            {"epsilon", c.epsilon},
            {"tau", c.tau},
            {"z_min", c.z_min},
            {"z_max", c.z_max},
            {"omega_min", c.omega_min},
            {"omega_max", c.omega_max},
            {"resampling", c.resampling == solver::Resampling::kFixed ? "fixed" : "fresh"},
            {"restarts", restarts}};
  }
};

std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

kinematics::KinematicChain load_chain_arg(const std::string& path, Manifest& manifest) {
  const fs::path p = path.empty() ? kinematics::bundled_arm_path() : fs::path(path);
  auto chain = kinematics::load_chain(p);
  manifest.input(p);
  return chain;
}

// --- commands --------------------------------------------------------------

int cmd_export_scene(const std::string& name, std::uint64_t scene_seed, const fs::path& out) {
  fs::create_directories(out);
  Manifest manifest("export-scene", out);
  manifest.config() = {{"scene", name}};
  manifest.seed("scene", scene_seed);
  const auto scene = datasets::generate_scene(name, scene_seed);
  datasets::save_scene(scene, out / (name + ".json"));
  manifest.output(name + ".json");
  manifest.output(name + ".depth");
  manifest.write();
  std::cout << (out / (name + ".json")).string() << "\n";
  return 0;
}

int cmd_fit(const std::string& scene_arg, std::uint64_t scene_seed, std::uint64_t seed,
            TrainFlags flags, const fs::path& out) {
  fs::create_directories(out);
  Manifest manifest("fit", out);
  auto [scene, file] = resolve_scene(scene_arg, scene_seed);
  if (file) manifest.input(*file);
  flags.train.seed = seed;
  flags.train.validate();
  manifest.config() = flags.snapshot();
  manifest.config()["scene"] = scene_arg;
  manifest.seed("train", seed);
  manifest.seed("scene", scene_seed);

  const auto t0 = Clock::now();
  const auto models = eval::fit_scene(scene, flags.train, flags.fit);
  manifest.timing("fit_s", since(t0));
  models.roi.save(out / "roi.sdim");
  manifest.output("roi.sdim");
  std::cout << "roi_model " << (out / "roi.sdim").string() << " points " << models.roi_points.cols() << "\n";
  if (models.constraint) {
    models.constraint->save(out / "constraint.sdim");
    manifest.output("constraint.sdim");
    std::cout << "constraint_model " << (out / "constraint.sdim").string() << " points "
              << models.permissible_xy.cols() << "\n";
  }
  manifest.write();
  return 0;
}

int cmd_solve(const std::string& scene_arg, std::uint64_t scene_seed, std::uint64_t seed,
              const std::string& roi_path, const std::string& constraint_path,
              const std::string& chain_path, const SolverFlags& flags, const fs::path& out) {
  fs::create_directories(out);
  Manifest manifest("solve", out);
  auto [scene, file] = resolve_scene(scene_arg, scene_seed);
  if (file) manifest.input(*file);
  const auto chain = load_chain_arg(chain_path, manifest);
  const auto roi = sim::EnergyModel::load(roi_path);
  manifest.input(roi_path);
  std::optional<sim::EnergyModel> constraint;
  if (!constraint_path.empty()) {
    constraint.emplace(sim::EnergyModel::load(constraint_path));
    manifest.input(constraint_path);
  }
  const auto config = flags.resolve(scene.limits, seed);
  manifest.config() = SolverFlags::snapshot(config, flags.restarts);
  manifest.config()["scene"] = scene_arg;
  manifest.seed("solver", seed);
  manifest.seed("scene", scene_seed);

  const Eigen::MatrixXd roi_points = geometry::to_matrix(datasets::roi_points(scene), 3);
  Eigen::MatrixXd perm;
  if (constraint) {
    if (!scene.constrained()) throw Error(ErrorCode::kInvalidScene, "constraint model given but scene has no permissible sketch");
    perm = geometry::to_matrix(datasets::permissible_points(scene), 2);
  }
  const auto region = solver::placement_region(roi_points, constraint ? &perm : nullptr,
                                               kinematics::sampled_reach(chain, 20000, seed));
  const auto t0 = Clock::now();
  const auto result = solver::solve_multistart(roi, constraint ? &*constraint : nullptr, chain, config,
                                               region, flags.restarts);
  manifest.timing("solve_s", since(t0));

  const auto& best = result.runs[static_cast<std::size_t>(result.best_index)];
  io::write_text_file(out / "trace.tsv", solver::trace_table(best.trace));
  manifest.output("trace.tsv");
  std::string placement = "x y z omega energy\n" + fmt6(result.best.x) + " " + fmt6(result.best.y) + " " +
                          fmt6(result.best.z) + " " + fmt6(result.best.omega) + " " +
                          fmt6(result.scores[static_cast<std::size_t>(result.best_index)]) + "\n";
  io::write_text_file(out / "placement.tsv", placement);
  manifest.output("placement.tsv");
  manifest.write();
  std::cout << placement;
  return 0;
}

int cmd_bench(std::vector<std::string> scenes, std::uint64_t scene_seed, std::uint64_t seed,
              const TrainFlags& train, const SolverFlags& solver_flags, int restarts, bool plot,
              const std::string& chain_path, const fs::path& out) {
  fs::create_directories(out);
  Manifest manifest("bench", out);
  const auto chain = load_chain_arg(chain_path, manifest);
  if (scenes.empty()) scenes = datasets::benchmark_scene_names();
  eval::BenchConfig config;
  config.train = train.train;
  config.fit = train.fit;
  config.solver = solver_flags.config;
  config.solver.resampling =
      solver_flags.resampling == "fixed" ? solver::Resampling::kFixed : solver::Resampling::kFresh;
  config.restarts = restarts;
  config.seed = seed;
  manifest.config() = train.snapshot();
  manifest.config()["solver"] = SolverFlags::snapshot(config.solver, restarts);
  manifest.config()["scenes"] = scenes;
  manifest.config()["test_points"] = config.test_points;
  manifest.config()["fk_samples"] = config.fk_samples;
  manifest.config()["tolerance"] = config.tolerance;
  manifest.config()["random_draws"] = config.random_draws;
  manifest.config()["ik_roi_samples"] = config.ik.roi_samples;
  manifest.config()["ik_candidates"] = config.ik.candidates;
  manifest.seed("bench", seed);
  manifest.seed("scene", scene_seed);

  std::vector<eval::ReachabilityReport> reports;
  for (const auto& arg : scenes) {
    auto [scene, file] = resolve_scene(arg, scene_seed);
    if (file) manifest.input(*file);
    sim::TrainConfig t = config.train;
    t.seed = seed;
    const auto t0 = Clock::now();
    const auto models = eval::fit_scene(scene, t, config.fit);
    manifest.timing(scene.name + ".fit_s", since(t0));
    reports.push_back(eval::run_benchmark(scene, models, chain, config));
    for (const auto& m : reports.back().methods) manifest.timing(scene.name + "." + m.method + "_s", m.runtime);
    std::cout << eval::report_table({reports.back()}, true) << std::flush;

    if (plot) {
      const Eigen::Vector3d lo = models.roi_points.rowwise().minCoeff();
      const Eigen::Vector3d hi = models.roi_points.rowwise().maxCoeff();
      const std::string roi_name = "roi_" + scene.name + ".grid";
      io::write_text_file(out / roi_name,
                          eval::probability_grid(models.roi, lo.head<2>().array() - 0.25,
                                                 hi.head<2>().array() + 0.25, 64, 64,
                                                 models.roi_points.row(2).mean()));
      manifest.output(roi_name);
      if (models.constraint) {
        const Eigen::Vector2d plo = models.permissible_xy.rowwise().minCoeff();
        const Eigen::Vector2d phi = models.permissible_xy.rowwise().maxCoeff();
        const std::string c_name = "constraint_" + scene.name + ".grid";
        io::write_text_file(out / c_name, eval::probability_grid(*models.constraint, plo.array() - 0.25,
                                                                 phi.array() + 0.25, 64, 64));
        manifest.output(c_name);
      }
    }
  }
  io::write_text_file(out / "report.tsv", eval::report_table(reports, false));
  manifest.output("report.tsv");
  io::write_text_file(out / "timings.tsv", eval::report_table(reports, true));
  manifest.write();
  return 0;
}

int cmd_compare_density(std::vector<std::string> shapes, std::uint64_t seed, int count, double noise,
                        const TrainFlags& train, long partition_samples, const fs::path& out) {
  fs::create_directories(out);
  Manifest manifest("compare-density", out);
  if (shapes.empty()) {
    for (auto k : datasets::all_shapes()) shapes.emplace_back(datasets::shape_name(k));
  }
  manifest.config() = train.snapshot();
  manifest.config()["shapes"] = shapes;
  manifest.config()["count"] = count;
  manifest.config()["noise"] = noise;
  manifest.config()["partition_samples"] = partition_samples;
  manifest.seed("dataset", seed);
  for (const auto& name : shapes) {
    auto spec = datasets::default_shape(datasets::parse_shape(name), seed);
    if (count > 0) spec.count = count;
    if (noise >= 0.0) spec.noise = noise;
    const auto t0 = Clock::now();
    const auto cmp = baselines::compare_density(spec, train.train, partition_samples);
    manifest.timing(name + "_s", since(t0));
    const std::string table = baselines::density_table(cmp);
    std::string file = "density_" + name + ".tsv";
    std::replace(file.begin(), file.end(), '+', '_');
    io::write_text_file(out / file, table);
    manifest.output(file);
    std::cout << "# " << name << "\n" << table << std::flush;
  }
  manifest.write();
  return 0;
}

int cmd_serve(const std::string& scene_arg, std::uint64_t scene_seed, const std::string& host, int port,
              bool preload, const std::string& chain_path) {
  auto [scene, file] = resolve_scene(scene_arg, scene_seed);
  const fs::path p = chain_path.empty() ? kinematics::bundled_arm_path() : fs::path(chain_path);
  service::Service svc(scene, kinematics::load_chain(p), preload);
  std::cerr << "serving " << scene.name << " on http://" << host << ":" << port << "\n";
  service::serve(svc, host, port);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sketch-driven mobile base placement"};
  app.require_subcommand(1);
  std::uint64_t seed = 0;
  std::uint64_t scene_seed = 0;
  std::string out = ".";
  std::string chain;

  auto common = [&](CLI::App* sub, bool with_out = true) {
    sub->add_option("--seed", seed, "random seed")->capture_default_str();
    if (with_out) sub->add_option("--out-dir", out, "output directory")->capture_default_str();
  };

  std::string scene_name;
  auto* exp = app.add_subcommand("export-scene", "write a builtin scene as JSON + depth file");
  exp->add_option("name", scene_name, "builtin scene name")->required();
  exp->add_option("--scene-seed", scene_seed, "layout jitter seed (0 = canonical)")->capture_default_str();
  exp->add_option("--out-dir", out, "output directory")->capture_default_str();

  std::string scene_arg;
  TrainFlags train_flags;
  auto* fit = app.add_subcommand("fit", "train the ROI and constraint maps of a scene");
  fit->add_option("scene", scene_arg, "scene .json file or builtin name")->required();
  fit->add_option("--scene-seed", scene_seed, "layout seed for builtin scenes")->capture_default_str();
  common(fit);
  train_flags.add(fit);

  std::string roi_model, constraint_model;
  SolverFlags solver_flags;
  auto* solve = app.add_subcommand("solve", "optimise the base placement");
  solve->add_option("scene", scene_arg, "scene .json file or builtin name")->required();
  solve->add_option("--scene-seed", scene_seed, "layout seed for builtin scenes")->capture_default_str();
  solve->add_option("--roi-model", roi_model, "ROI map (.sdim)")->required();
  solve->add_option("--constraint-model", constraint_model, "constraint map (.sdim)");
  solve->add_option("--chain", chain, "kinematic chain file (default: bundled arm)");
  common(solve);
  solver_flags.add(solve);

  std::vector<std::string> bench_scenes;
  TrainFlags bench_train;
  SolverFlags bench_solver;
  eval::BenchConfig bench_defaults;
  int bench_restarts = bench_defaults.restarts;
  bool plot = false;
  auto* bench = app.add_subcommand("bench", "coverage of ours, IK and random placement");
  bench->add_option("scenes", bench_scenes, "scene files or builtin names (default: benchmark scenes)");
  bench->add_option("--scene-seed", scene_seed, "layout seed for builtin scenes")->capture_default_str();
  bench->add_option("--chain", chain, "kinematic chain file (default: bundled arm)");
  bench->add_flag("--plot", plot, "write probability grids");
  common(bench);
  bench_train.add(bench);
  bench->add_option("--step", bench_solver.config.step, "gradient step alpha")->capture_default_str();
  bench->add_option("--samples", bench_solver.config.samples, "joint samples per step N")->capture_default_str();
  bench->add_option("--iterations", bench_solver.config.iterations, "solver iterations")->capture_default_str();
  bench->add_option("--tau", bench_solver.config.tau, "feasibility threshold")->capture_default_str();
  bench->add_option("--restarts", bench_restarts, "solver restarts")->capture_default_str();

  std::vector<std::string> shapes;
  int count = 0;
  double noise = -1.0;
  long partition_samples = 200000;
  TrainFlags density_train;
  auto* density = app.add_subcommand("compare-density", "KDE, GMM and energy-model log-likelihoods");
  density->add_option("shapes", shapes, "shape names (default: all)");
  density->add_option("--count", count, "points per dataset (default: 5000)");
  density->add_option("--noise", noise, "noise sigma in metres (default: 0.005)");
  density->add_option("--partition-samples", partition_samples, "samples for the partition estimate")
      ->capture_default_str();
  common(density);
  density_train.add(density);

  std::string host = "127.0.0.1";
  int port = 8080;
  bool preload = false;
  auto* serve = app.add_subcommand("serve", "HTTP service for the sketching UI");
  serve->add_option("scene", scene_arg, "scene .json file or builtin name")->required();
  serve->add_option("--scene-seed", scene_seed, "layout seed for builtin scenes")->capture_default_str();
  serve->add_option("--host", host, "bind address")->capture_default_str();
  serve->add_option("--port", port, "port")->capture_default_str();
  serve->add_option("--chain", chain, "kinematic chain file (default: bundled arm)");
  serve->add_flag("--preload-sketches", preload, "start sessions with the scene's own sketches");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error " << error_name(ErrorCode::kConfiguration) << " "
              << exit_code(ErrorCode::kConfiguration) << ": " << e.what() << "\n";
    return exit_code(ErrorCode::kConfiguration);
  }

  try {
    if (*exp) return cmd_export_scene(scene_name, scene_seed, out);
    if (*fit) return cmd_fit(scene_arg, scene_seed, seed, train_flags, out);
    if (*solve) {
      return cmd_solve(scene_arg, scene_seed, seed, roi_model, constraint_model, chain, solver_flags, out);
    }
    if (*bench) {
      return cmd_bench(bench_scenes, scene_seed, seed, bench_train, bench_solver, bench_restarts, plot, chain,
                       out);
    }
    if (*density) return cmd_compare_density(shapes, seed, count, noise, density_train, partition_samples, out);
    if (*serve) return cmd_serve(scene_arg, scene_seed, host, port, preload, chain);
  } catch (const Error& e) {
    std::cerr << "error " << error_name(e.code()) << " " << exit_code(e.code()) << ": " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error " << error_name(ErrorCode::kIo) << " " << exit_code(ErrorCode::kIo) << ": " << e.what()
              << "\n";
    return exit_code(ErrorCode::kIo);
  }
  return 0;
}
