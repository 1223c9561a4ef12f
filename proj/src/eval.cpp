#include "sdi/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include <Eigen/Dense>

#include "sdi/error.hpp"
#include "sdi/random.hpp"

namespace sdi::eval {

// --- Coverage --------------------------------------------------------------

CoverageOracle::CoverageOracle(const KinematicChain& chain, Eigen::Index samples, double tolerance,
                               std::uint64_t seed)
    : tolerance_(tolerance) {
  if (!(tolerance > 0.0)) throw Error(ErrorCode::kConfiguration, "tolerance must be > 0");
  const Eigen::Matrix3Xd raw =
      kinematics::local_positions(chain, kinematics::sample_joints(chain, samples, seed));
  reach_ = raw.colwise().norm().maxCoeff();
  origin_ = raw.rowwise().minCoeff().array() - tolerance;
  const Eigen::Vector3d extent = raw.rowwise().maxCoeff() - origin_;
  for (int k = 0; k < 3; ++k) {
    dims_(k) = static_cast<int>(std::floor(extent(k) / tolerance)) + 2;
  }

  auto cell_of = [&](const Eigen::Vector3d& p) {
    Eigen::Vector3i c = ((p - origin_) / tolerance).array().floor().cast<int>();
    return (static_cast<std::int64_t>(c.z()) * dims_.y() + c.y()) * dims_.x() + c.x();
  };
  const std::int64_t cells = static_cast<std::int64_t>(dims_.x()) * dims_.y() * dims_.z();
  std::vector<std::int64_t> key(static_cast<std::size_t>(raw.cols()));
  for (Eigen::Index i = 0; i < raw.cols(); ++i) key[static_cast<std::size_t>(i)] = cell_of(raw.col(i));
  std::vector<Eigen::Index> order(key.size());
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return key[static_cast<std::size_t>(a)] < key[static_cast<std::size_t>(b)];
  });
  samples_.resize(3, raw.cols());
  cell_start_.assign(static_cast<std::size_t>(cells) + 1, 0);
  for (std::size_t i = 0; i < order.size(); ++i) {
    samples_.col(static_cast<Eigen::Index>(i)) = raw.col(order[i]);
    ++cell_start_[static_cast<std::size_t>(key[static_cast<std::size_t>(order[i])]) + 1];
  }
  std::partial_sum(cell_start_.begin(), cell_start_.end(), cell_start_.begin());
}

bool CoverageOracle::reachable_local(const Eigen::Vector3d& local) const {
  const Eigen::Vector3d rel = (local - origin_) / tolerance_;
  const int cx = static_cast<int>(std::floor(rel.x()));
  const int cy = static_cast<int>(std::floor(rel.y()));
  const int cz = static_cast<int>(std::floor(rel.z()));
  const double tol2 = tolerance_ * tolerance_;
  for (int z = std::max(cz - 1, 0); z <= std::min(cz + 1, dims_.z() - 1); ++z) {
    for (int y = std::max(cy - 1, 0); y <= std::min(cy + 1, dims_.y() - 1); ++y) {
      const std::int64_t row = (static_cast<std::int64_t>(z) * dims_.y() + y) * dims_.x();
      const int x0 = std::max(cx - 1, 0);
      const int x1 = std::min(cx + 1, dims_.x() - 1);
      if (x0 > x1) continue;
      const std::int32_t begin = cell_start_[static_cast<std::size_t>(row + x0)];
      const std::int32_t end = cell_start_[static_cast<std::size_t>(row + x1) + 1];
      for (std::int32_t i = begin; i < end; ++i) {
        if ((samples_.col(i) - local).squaredNorm() <= tol2) return true;
      }
    }
  }
  return false;
}

std::vector<std::uint8_t> CoverageOracle::reachable_mask(const BaseConfig& base,
                                                         const Eigen::Matrix3Xd& points) const {
  const double c = std::cos(base.omega);
  const double s = std::sin(base.omega);
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(points.cols()));
  for (Eigen::Index i = 0; i < points.cols(); ++i) {
    const double dx = points(0, i) - base.x;
    const double dy = points(1, i) - base.y;
    const Eigen::Vector3d local(c * dx + s * dy, -s * dx + c * dy, points(2, i) - base.z);
    mask[static_cast<std::size_t>(i)] = reachable_local(local) ? 1 : 0;
  }
  return mask;
}

double CoverageOracle::coverage(const BaseConfig& base, const Eigen::Matrix3Xd& points) const {
  if (points.cols() == 0) return 0.0;
  const auto mask = reachable_mask(base, points);
  return static_cast<double>(std::count(mask.begin(), mask.end(), 1)) /
         static_cast<double>(points.cols());
}

double coverage(const KinematicChain& chain, const BaseConfig& base, const Eigen::Matrix3Xd& roi,
                Eigen::Index samples, double tolerance, std::uint64_t seed) {
  return CoverageOracle(chain, samples, tolerance, seed).coverage(base, roi);
}

// --- IK --------------------------------------------------------------------

namespace {

std::optional<Eigen::VectorXd> dls_from(const KinematicChain& chain, const Eigen::Vector3d& target,
                                        const BaseConfig& base, Eigen::VectorXd q,
                                        const IkOptions& options) {
  const Eigen::VectorXd lo = chain.lower();
  const Eigen::VectorXd hi = chain.upper();
  const double lambda2 = options.damping * options.damping;
  for (int it = 0; it <= options.max_iterations; ++it) {
    const Eigen::Vector3d error = target - kinematics::forward(chain, q, base);
    if (error.norm() < options.tolerance) return q;
    if (it == options.max_iterations) break;
    const Eigen::MatrixXd j = kinematics::joint_jacobian(chain, q, base);
    const Eigen::Matrix3d jjt = j * j.transpose() + lambda2 * Eigen::Matrix3d::Identity();
    q += j.transpose() * jjt.ldlt().solve(error);
    q = q.cwiseMax(lo).cwiseMin(hi);
  }
  return std::nullopt;
}

}  // namespace

std::optional<Eigen::VectorXd> ik_solve(const KinematicChain& chain, const Eigen::Vector3d& target,
                                        const BaseConfig& base, const IkOptions& options) {
  if (!target.allFinite()) throw Error(ErrorCode::kConfiguration, "IK target is not finite");
  const Eigen::VectorXd mid = 0.5 * (chain.lower() + chain.upper());
  if (auto q = dls_from(chain, target, base, mid, options)) return q;
  if (options.restarts > 0) {
    const Eigen::MatrixXd starts = kinematics::sample_joints(chain, options.restarts, options.seed);
    for (Eigen::Index r = 0; r < starts.cols(); ++r) {
      if (auto q = dls_from(chain, target, base, starts.col(r), options)) return q;
    }
  }
  return std::nullopt;
}

// --- Baselines -------------------------------------------------------------

namespace {

// Clamps z and omega and projects x, y onto the permissible contour.
// Returns false when the projection fails.
bool make_feasible(BaseConfig& c, const EnergyField* constraint,
                   const solver::SolverConfig& limits) {
  c.z = std::clamp(c.z, limits.z_min, limits.z_max);
  c.omega = std::clamp(c.omega, limits.omega_min, limits.omega_max);
  if (constraint == nullptr || solver::feasible_xy(*constraint, {c.x, c.y}, limits.tau)) return true;
  try {
    auto p = solver::project_to_boundary(*constraint, {c.x, c.y}, limits.tau,
                                         limits.project_iterations, limits.epsilon);
    if (!p.converged) return false;
    c.x = p.point.x();
    c.y = p.point.y();
    return true;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kStationaryPoint) throw;
    return false;
  }
}

}  // namespace

BaseConfig ik_baseline(const EnergyField& roi, const sim::SamplingBox& roi_box,
                       const EnergyField* constraint, const solver::PlacementRegion& region,
                       const KinematicChain& chain, const solver::SolverConfig& limits,
                       const IkBaselineConfig& config) {
  if (config.roi_samples < 1 || config.candidates < 1) {
    throw Error(ErrorCode::kConfiguration, "IK baseline needs samples and candidates");
  }
  Rng rng(derive_seed(config.seed, 0x1CB));
  const double reach = kinematics::sampled_reach(chain, 20000, config.seed) * 1.05;

  // ROI targets by rejection sampling on sigma(E).
  std::vector<Eigen::Vector3d> targets;
  constexpr int kMaxProposals = 1000000;
  int proposals = 0;
  while (static_cast<int>(targets.size()) < config.roi_samples && proposals < kMaxProposals) {
    Eigen::MatrixXd batch = sim::sample_box(roi_box, 1024, rng);
    Eigen::VectorXd e;
    roi.evaluate(batch, e, nullptr);
    for (Eigen::Index i = 0; i < batch.cols() && static_cast<int>(targets.size()) < config.roi_samples; ++i) {
      if (uniform(rng, 0.0, 1.0) < sigmoid(e(i))) targets.push_back(batch.col(i));
    }
    proposals += 1024;
  }
  if (targets.empty()) throw Error(ErrorCode::kBaselineFailure, "ROI map accepted no samples");

  std::vector<BaseConfig> found;
  for (const auto& target : targets) {
    for (int k = 0; k < config.candidates; ++k) {
      BaseConfig c;
      try {
        c = solver::sample_feasible(constraint, region, limits, rng);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kInfeasible) throw;
        throw Error(ErrorCode::kBaselineFailure, "no feasible candidate placements");
      }
      if ((target - Eigen::Vector3d(c.x, c.y, c.z)).norm() > reach) continue;
      IkOptions ik = config.ik;
      ik.seed = rng();
      if (ik_solve(chain, target, c, ik)) {
        found.push_back(c);
        break;
      }
    }
  }
  if (found.empty()) throw Error(ErrorCode::kBaselineFailure, "IK succeeded for no ROI sample");

  Eigen::Vector4d mean = Eigen::Vector4d::Zero();
  for (const auto& c : found) mean += c.vector();
  mean /= static_cast<double>(found.size());
  BaseConfig out = BaseConfig::from_vector(mean);
  if (make_feasible(out, constraint, limits)) return out;

  // Projection failed: fall back to the found placement nearest the mean.
  auto nearest = std::min_element(found.begin(), found.end(), [&](const auto& a, const auto& b) {
    return (a.vector() - mean).template head<2>().norm() < (b.vector() - mean).template head<2>().norm();
  });
  return *nearest;
}

BaseConfig random_baseline(const EnergyField* constraint, const solver::PlacementRegion& region,
                           const solver::SolverConfig& limits, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x4A7D));
  return solver::sample_feasible(constraint, region, limits, rng);
}

// --- Benchmark -------------------------------------------------------------

const MethodResult& ReachabilityReport::method(const std::string& name) const {
  for (const auto& m : methods) {
    if (m.method == name) return m;
  }
  throw Error(ErrorCode::kConfiguration, "no method '" + name + "' in report");
}

namespace {

Eigen::MatrixXd take_columns(const Eigen::MatrixXd& points, int count, std::uint64_t seed) {
  if (count <= 0 || points.cols() <= count) return points;
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(points.cols()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  Rng rng(derive_seed(seed, 0x5B5));
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(static_cast<std::size_t>(count));
  std::sort(idx.begin(), idx.end());
  Eigen::MatrixXd out(points.rows(), count);
  for (int i = 0; i < count; ++i) out.col(i) = points.col(idx[static_cast<std::size_t>(i)]);
  return out;
}

}  // namespace

SceneModels fit_scene(const datasets::SceneSpec& scene, const sim::TrainConfig& train,
                      const SceneFitOptions& options) {
  const Eigen::MatrixXd roi = geometry::to_matrix(datasets::roi_points(scene), 3);
  Eigen::MatrixXd perm;
  std::optional<sim::EnergyModel> constraint;
  if (scene.constrained()) {
    perm = geometry::to_matrix(datasets::permissible_points(scene), 2);
    sim::TrainConfig c = train;
    c.seed = derive_seed(train.seed, 0xC0);
    c.padding = options.constraint_padding;
    constraint.emplace(sim::nce_fit(take_columns(perm, options.max_points, c.seed), c));
  }
  sim::TrainConfig r = train;
  r.seed = derive_seed(train.seed, 0x40);
  sim::EnergyModel roi_model = sim::nce_fit(take_columns(roi, options.max_points, r.seed), r);
  return SceneModels{std::move(roi_model), std::move(constraint), roi, perm,
                     sim::negative_box(roi, train.padding)};
}

Eigen::Matrix3Xd subsample(const Eigen::MatrixXd& points, int count, std::uint64_t seed) {
  if (points.rows() != 3) throw Error(ErrorCode::kShape, "subsample expects 3D points");
  return take_columns(points, count, derive_seed(seed, 0x7E57));
}

solver::SolverConfig with_scene_limits(solver::SolverConfig config, const datasets::Limits& limits) {
  config.z_min = limits.z_min;
  config.z_max = limits.z_max;
  config.omega_min = limits.omega_min;
  config.omega_max = limits.omega_max;
  return config;
}

ReachabilityReport run_benchmark(const datasets::SceneSpec& scene, const KinematicChain& chain,
                                 const BenchConfig& config) {
  sim::TrainConfig train = config.train;
  train.seed = config.seed;
  return run_benchmark(scene, fit_scene(scene, train, config.fit), chain, config);
}

ReachabilityReport run_benchmark(const datasets::SceneSpec& scene, const SceneModels& models,
                                 const KinematicChain& chain, const BenchConfig& config) {
  using Clock = std::chrono::steady_clock;
  auto seconds = [](Clock::time_point a, Clock::time_point b) {
    return std::chrono::duration<double>(b - a).count();
  };
  ReachabilityReport report;
  report.scene = scene.name;
  report.fk_samples = config.fk_samples;
  report.tolerance = config.tolerance;
  report.seed = config.seed;

  const Eigen::Matrix3Xd test = subsample(models.roi_points, config.test_points, config.seed);
  report.test_points = static_cast<int>(test.cols());
  const CoverageOracle oracle(chain, config.fk_samples, config.tolerance,
                              derive_seed(config.seed, 0x0C));
  const EnergyField* constraint = models.constraint ? &*models.constraint : nullptr;
  solver::SolverConfig limits = with_scene_limits(config.solver, scene.limits);
  limits.seed = derive_seed(config.seed, 0x50);
  const Eigen::MatrixXd* perm = constraint != nullptr ? &models.permissible_xy : nullptr;
  const auto region = solver::placement_region(models.roi_points, perm, oracle.reach());

  auto t0 = Clock::now();
  auto ours = solver::solve_multistart(models.roi, constraint, chain, limits, region, config.restarts);
  auto t1 = Clock::now();
  report.methods.push_back({"ours", oracle.coverage(ours.best, test), seconds(t0, t1), ours.best});

  IkBaselineConfig ik = config.ik;
  ik.seed = derive_seed(config.seed, 0x1C);
  t0 = Clock::now();
  const BaseConfig ik_place =
      ik_baseline(models.roi, models.roi_box, constraint, region, chain, limits, ik);
  t1 = Clock::now();
  report.methods.push_back({"ik", oracle.coverage(ik_place, test), seconds(t0, t1), ik_place});

  // Random placement quality is the mean over several draws.
  double total = 0.0;
  double elapsed = 0.0;
  BaseConfig first;
  for (int d = 0; d < config.random_draws; ++d) {
    t0 = Clock::now();
    const BaseConfig r = random_baseline(constraint, region, limits, derive_seed(config.seed, 0x7000 + d));
    t1 = Clock::now();
    elapsed += seconds(t0, t1);
    if (d == 0) first = r;
    total += oracle.coverage(r, test);
  }
  report.methods.push_back({"random", total / config.random_draws, elapsed / config.random_draws, first});
  return report;
}

std::string report_table(const std::vector<ReachabilityReport>& reports, bool with_runtime) {
  std::string out = with_runtime ? "scene method coverage_pct runtime_s x y z omega\n"
                                 : "scene method coverage_pct x y z omega\n";
  char line[256];
  for (const auto& r : reports) {
    for (const auto& m : r.methods) {
      if (with_runtime) {
        std::snprintf(line, sizeof line, "%s %s %.6g %.6g %.6g %.6g %.6g %.6g\n", r.scene.c_str(),
                      m.method.c_str(), 100.0 * m.coverage, m.runtime, m.placement.x, m.placement.y,
                      m.placement.z, m.placement.omega);
      } else {
        std::snprintf(line, sizeof line, "%s %s %.6g %.6g %.6g %.6g %.6g\n", r.scene.c_str(),
                      m.method.c_str(), 100.0 * m.coverage, m.placement.x, m.placement.y,
                      m.placement.z, m.placement.omega);
      }
      out += line;
    }
  }
  return out;
}

std::string probability_grid(const EnergyField& model, const Eigen::Vector2d& lo,
                             const Eigen::Vector2d& hi, int nx, int ny, double z) {
  if (nx < 2 || ny < 2) throw Error(ErrorCode::kConfiguration, "grid needs at least 2x2 cells");
  const int d = model.input_dim();
  if (d != 2 && d != 3) throw Error(ErrorCode::kShape, "grid needs a 2D or 3D map");
  const double dx = (hi.x() - lo.x()) / (nx - 1);
  const double dy = (hi.y() - lo.y()) / (ny - 1);
  Eigen::MatrixXd pts(d, static_cast<Eigen::Index>(nx) * ny);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const Eigen::Index k = static_cast<Eigen::Index>(j) * nx + i;
      pts(0, k) = lo.x() + i * dx;
      pts(1, k) = lo.y() + j * dy;
      if (d == 3) pts(2, k) = z;
    }
  }
  Eigen::VectorXd e;
  model.evaluate(pts, e, nullptr);
  std::string out;
  char buf[128];
  std::snprintf(buf, sizeof buf, "# grid %d %d %.6g %.6g %.6g %.6g\n", nx, ny, lo.x(), lo.y(), dx, dy);
  out += buf;
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      std::snprintf(buf, sizeof buf, i == 0 ? "%.6g" : " %.6g", sigmoid(e(static_cast<Eigen::Index>(j) * nx + i)));
      out += buf;
    }
    out += '\n';
  }
  return out;
}

}  // namespace sdi::eval
