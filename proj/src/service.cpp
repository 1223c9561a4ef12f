#include "sdi/service.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <httplib.h>

#include "sdi/solver.hpp"

namespace sdi::service {

using nlohmann::json;

std::string_view state_name(SessionState state) {
  switch (state) {
    case SessionState::kSceneLoaded: return "scene-loaded";
    case SessionState::kSketched: return "sketched";
    case SessionState::kFitted: return "fitted";
    case SessionState::kSolved: return "solved";
  }
  return "unknown";
}

namespace {

constexpr int kPreviewStride = 4;
constexpr int kGridCells = 64;

json sketch_json(const geometry::Sketch& s, int id) {
  json vertices = json::array();
  for (const auto& v : s.vertices) vertices.push_back({v.x(), v.y()});
  return {{"id", id}, {"label", std::string(geometry::label_name(s.label))}, {"vertices", vertices}};
}

json base_json(const kinematics::BaseConfig& c) {
  return {{"x", c.x}, {"y", c.y}, {"z", c.z}, {"omega", c.omega}};
}

// Reads an optional numeric field, rejecting wrong types.
template <typename T>
T field(const json& body, const char* key, T fallback) {
  if (!body.contains(key)) return fallback;
  const json& v = body[key];
  if (!v.is_number()) {
    throw RequestError(422, ErrorCode::kConfiguration, std::string("field '") + key + "' must be a number");
  }
  return v.get<T>();
}

json world_grid(const EnergyField& model, Eigen::Vector2d lo, Eigen::Vector2d hi, double z) {
  const double dx = (hi.x() - lo.x()) / (kGridCells - 1);
  const double dy = (hi.y() - lo.y()) / (kGridCells - 1);
  const int d = model.input_dim();
  Eigen::MatrixXd pts(d, kGridCells * kGridCells);
  for (int j = 0; j < kGridCells; ++j) {
    for (int i = 0; i < kGridCells; ++i) {
      pts(0, j * kGridCells + i) = lo.x() + i * dx;
      pts(1, j * kGridCells + i) = lo.y() + j * dy;
      if (d == 3) pts(2, j * kGridCells + i) = z;
    }
  }
  Eigen::VectorXd e;
  model.evaluate(pts, e, nullptr);
  json values = json::array();
  for (Eigen::Index k = 0; k < e.size(); ++k) values.push_back(sigmoid(e(k)));
  return {{"nx", kGridCells}, {"ny", kGridCells}, {"x0", lo.x()}, {"y0", lo.y()},
          {"dx", dx}, {"dy", dy}, {"z", z}, {"values", values}};
}

// sigma of the map at each sampled pixel's back-projected point; -1 where the
// depth is invalid.
json image_grid(const EnergyField& model, const datasets::SceneSpec& scene) {
  const auto& depth = scene.depth;
  const int w = (depth.width + kPreviewStride - 1) / kPreviewStride;
  const int h = (depth.height + kPreviewStride - 1) / kPreviewStride;
  std::vector<Eigen::Index> slots;
  Eigen::MatrixXd pts(model.input_dim(), w * h);
  Eigen::Index n = 0;
  for (int j = 0; j < h; ++j) {
    for (int i = 0; i < w; ++i) {
      const int u = i * kPreviewStride;
      const int v = j * kPreviewStride;
      if (!depth.is_valid(u, v)) continue;
      const Eigen::Vector3d p = geometry::project_pixel(scene.camera, u, v, depth.at(u, v));
      pts.col(n) = p.head(model.input_dim());
      slots.push_back(j * w + i);
      ++n;
    }
  }
  std::vector<double> values(static_cast<std::size_t>(w) * h, -1.0);
  if (n > 0) {
    Eigen::VectorXd e;
    model.evaluate(pts.leftCols(n), e, nullptr);
    for (Eigen::Index k = 0; k < n; ++k) values[static_cast<std::size_t>(slots[k])] = sigmoid(e(k));
  }
  return {{"stride", kPreviewStride}, {"width", w}, {"height", h}, {"values", values}};
}

json model_summary(const sim::EnergyModel& model, Eigen::Index points) {
  const auto& n = model.normalizer();
  json center = json::array();
  json scale = json::array();
  for (Eigen::Index i = 0; i < n.center.size(); ++i) {
    center.push_back(n.center(i));
    scale.push_back(n.scale(i));
  }
  return {{"input_dim", model.input_dim()},
          {"parameters", model.network().parameter_count()},
          {"points", points},
          {"center", center},
          {"scale", scale}};
}

}  // namespace

// --- Session ---------------------------------------------------------------

Session::Session(datasets::SceneSpec scene, const kinematics::KinematicChain* chain)
    : scene_(std::move(scene)), chain_(chain) {}

json Session::scene_json() const {
  const auto& c = scene_.camera;
  json rotation = json::array();
  for (int r = 0; r < 3; ++r) rotation.push_back({c.rotation(r, 0), c.rotation(r, 1), c.rotation(r, 2)});
  json sketches = json::array();
  for (std::size_t i = 0; i < sketches_.size(); ++i) sketches.push_back(sketch_json(sketches_[i], sketch_ids_[i]));
  return {{"name", scene_.name},
          {"state", std::string(state_name(state_))},
          {"width", scene_.depth.width},
          {"height", scene_.depth.height},
          {"camera",
           {{"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy}, {"rotation", rotation},
            {"translation", {c.translation.x(), c.translation.y(), c.translation.z()}}}},
          {"limits",
           {{"z_min", scene_.limits.z_min},
            {"z_max", scene_.limits.z_max},
            {"omega_min", scene_.limits.omega_min},
            {"omega_max", scene_.limits.omega_max}}},
          {"sketches", sketches}};
}

std::string Session::scene_image() const {
  const auto& d = scene_.depth;
  float lo = std::numeric_limits<float>::max();
  float hi = 0.0F;
  for (std::size_t i = 0; i < d.values.size(); ++i) {
    if (!d.valid[i]) continue;
    lo = std::min(lo, d.values[i]);
    hi = std::max(hi, d.values[i]);
  }
  std::vector<std::uint8_t> gray(d.values.size(), 0);
  const float span = hi > lo ? hi - lo : 1.0F;
  for (std::size_t i = 0; i < d.values.size(); ++i) {
    if (!d.valid[i]) continue;
    gray[i] = static_cast<std::uint8_t>(std::lround(40.0F + 215.0F * (hi - d.values[i]) / span));
  }
  return encode_bmp(d.width, d.height, gray);
}

json Session::add_sketch(const json& body) {
  geometry::Sketch sketch;
  try {
    sketch.label = geometry::parse_label(body.at("label").get<std::string>());
    const json& vertices = body.at("vertices");
    if (!vertices.is_array()) throw RequestError(422, ErrorCode::kParse, "vertices must be an array");
    for (const json& v : vertices) {
      if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
        throw RequestError(422, ErrorCode::kParse, "vertex must be [u, v]");
      }
      sketch.vertices.emplace_back(v[0].get<double>(), v[1].get<double>());
    }
  } catch (const json::exception& e) {
    throw RequestError(422, ErrorCode::kParse, e.what());
  } catch (const RequestError&) {
    throw;
  } catch (const Error& e) {
    throw RequestError(422, e.code(), e.what());
  }
  try {
    sketch.validate(scene_.depth.width, scene_.depth.height);
    if (geometry::project_sketch(scene_.camera, scene_.depth, sketch).empty()) {
      throw Error(ErrorCode::kEmptyPointSet, "sketch covers no valid depth");
    }
  } catch (const RequestError&) {
    throw;
  } catch (const Error& e) {
    throw RequestError(422, e.code(), e.what());
  }
  const int id = next_sketch_id_++;
  sketches_.push_back(std::move(sketch));
  sketch_ids_.push_back(id);
  state_ = SessionState::kSketched;
  models_.reset();
  results_.clear();
  return {{"id", id}, {"state", std::string(state_name(state_))}};
}

json Session::clear_sketches() {
  sketches_.clear();
  sketch_ids_.clear();
  models_.reset();
  results_.clear();
  state_ = SessionState::kSceneLoaded;
  return {{"state", std::string(state_name(state_))}};
}

datasets::SceneSpec Session::scene_with_sketches() const {
  datasets::SceneSpec s = scene_;
  s.sketches = sketches_;
  return s;
}

json Session::fit(const json& body) {
  if (state_ == SessionState::kSceneLoaded) {
    throw RequestError(409, ErrorCode::kInvalidScene, "no sketches submitted");
  }
  datasets::SceneSpec scene = scene_with_sketches();
  sim::TrainConfig train;
  eval::SceneFitOptions options;
  train.epochs = field(body, "epochs", train.epochs);
  train.batch_size = field(body, "batch_size", train.batch_size);
  train.learning_rate = field(body, "learning_rate", train.learning_rate);
  train.weight_decay = field(body, "weight_decay", train.weight_decay);
  train.padding = field(body, "padding", train.padding);
  train.seed = field<std::uint64_t>(body, "seed", train.seed);
  options.max_points = field(body, "max_points", options.max_points);
  try {
    scene.validate();
    train.validate();
    models_.emplace(eval::fit_scene(scene, train, options));
  } catch (const Error& e) {
    throw RequestError(422, e.code(), e.what());
  }
  fitted_scene_ = scene;
  state_ = SessionState::kFitted;
  results_.clear();

  const auto& m = *models_;
  const Eigen::Vector3d rlo = m.roi_points.rowwise().minCoeff();
  const Eigen::Vector3d rhi = m.roi_points.rowwise().maxCoeff();
  const double mean_z = m.roi_points.row(2).mean();
  json out = {{"state", std::string(state_name(state_))},
              {"roi", model_summary(m.roi, m.roi_points.cols())},
              {"constraint", nullptr},
              {"preview",
               {{"roi",
                 {{"world", world_grid(m.roi, rlo.head<2>().array() - 0.25, rhi.head<2>().array() + 0.25, mean_z)},
                  {"image", image_grid(m.roi, scene)}}},
                {"constraint", nullptr}}}};
  if (m.constraint) {
    const Eigen::Vector2d plo = m.permissible_xy.rowwise().minCoeff();
    const Eigen::Vector2d phi = m.permissible_xy.rowwise().maxCoeff();
    out["constraint"] = model_summary(*m.constraint, m.permissible_xy.cols());
    out["preview"]["constraint"] = {
        {"world", world_grid(*m.constraint, plo.array() - 0.25, phi.array() + 0.25, 0.0)},
        {"image", image_grid(*m.constraint, scene)}};
  }
  return out;
}

json Session::solve(const json& body) {
  if (!models_) throw RequestError(409, ErrorCode::kConfiguration, "fit before solving");
  solver::SolverConfig config = eval::with_scene_limits({}, fitted_scene_.limits);
  config.step = field(body, "step", config.step);
  config.samples = field(body, "samples", config.samples);
  config.iterations = field(body, "iterations", config.iterations);
  config.project_iterations = field(body, "project_iterations", config.project_iterations);
  config.epsilon = field(body, "epsilon", config.epsilon);
  config.tau = field(body, "tau", config.tau);
  config.seed = field<std::uint64_t>(body, "seed", config.seed);
  const int restarts = field(body, "restarts", 1);
  if (body.contains("resampling")) {
    const json& r = body["resampling"];
    if (r == "fixed") {
      config.resampling = solver::Resampling::kFixed;
    } else if (r != "fresh") {
      throw RequestError(422, ErrorCode::kConfiguration, "resampling must be 'fresh' or 'fixed'");
    }
  }
  const auto& m = *models_;
  const EnergyField* constraint = m.constraint ? &*m.constraint : nullptr;
  solver::MultistartResult result;
  try {
    config.validate();
    const double reach = kinematics::sampled_reach(*chain_, 20000, config.seed);
    const auto region =
        solver::placement_region(m.roi_points, constraint ? &m.permissible_xy : nullptr, reach);
    result = solver::solve_multistart(m.roi, constraint, *chain_, config, region, restarts);
  } catch (const Error& e) {
    throw RequestError(422, e.code(), e.what());
  }

  const auto& best = result.runs[static_cast<std::size_t>(result.best_index)];
  json trace = json::array();
  for (const auto& e : best.trace.entries) {
    trace.push_back({{"iteration", e.iteration},
                     {"base", base_json(e.base)},
                     {"energy", e.expected_energy},
                     {"grad_norm", e.gradient_norm},
                     {"projected", e.projected},
                     {"projection_iters", e.projection_iterations},
                     {"reverted", e.reverted}});
  }
  const Eigen::Vector3d pixel =
      geometry::reproject_point(fitted_scene_.camera, {result.best.x, result.best.y, 0.0});
  json scores = json::array();
  for (double s : result.scores) scores.push_back(s);
  const int id = next_result_id_++;
  json out = {{"id", id},
              {"placement", base_json(result.best)},
              {"expected_energy", result.scores[static_cast<std::size_t>(result.best_index)]},
              {"pixel", {{"u", pixel.x()}, {"v", pixel.y()}}},
              {"initial", base_json(best.trace.initial)},
              {"restarts", restarts},
              {"best_restart", result.best_index},
              {"scores", scores},
              {"trace", trace}};
  results_[id] = out;
  state_ = SessionState::kSolved;
  return out;
}

json Session::result(int id) const {
  auto it = results_.find(id);
  if (it == results_.end()) {
    throw RequestError(404, ErrorCode::kConfiguration, "no result " + std::to_string(id));
  }
  return it->second;
}

// --- Service ---------------------------------------------------------------

Service::Service(datasets::SceneSpec scene, kinematics::KinematicChain chain, bool preload_sketches)
    : scene_(std::move(scene)), chain_(std::move(chain)), preload_(preload_sketches) {}

Service::Entry& Service::entry(const std::string& id) {
  std::lock_guard lock(registry_mutex_);
  auto& slot = sessions_[id];
  if (!slot) {
    slot = std::make_unique<Entry>();
    slot->session = std::make_unique<Session>(scene_, &chain_);
    if (preload_) {
      for (const auto& s : scene_.sketches) {
        json vertices = json::array();
        for (const auto& v : s.vertices) vertices.push_back({v.x(), v.y()});
        slot->session->add_sketch({{"label", std::string(geometry::label_name(s.label))}, {"vertices", vertices}});
      }
    }
  }
  return *slot;
}

namespace {

void send_error(httplib::Response& res, int status, ErrorCode code, const std::string& message) {
  json body = {{"error",
                {{"class", std::string(error_name(code))},
                 {"code", exit_code(code)},
                 {"message", message}}}};
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

std::string session_id(const httplib::Request& req) {
  std::string id = req.get_header_value("X-Session-Id");
  return id.empty() ? "default" : id;
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    json body = json::parse(req.body);
    if (!body.is_object()) throw RequestError(422, ErrorCode::kParse, "body must be a JSON object");
    return body;
  } catch (const json::exception& e) {
    throw RequestError(422, ErrorCode::kParse, e.what());
  }
}

template <typename F>
void guarded(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const RequestError& e) {
    send_error(res, e.status(), e.code(), e.what());
  } catch (const Error& e) {
    send_error(res, 500, e.code(), e.what());
  } catch (const std::exception& e) {
    send_error(res, 500, ErrorCode::kConfiguration, e.what());
  }
}

}  // namespace

void Service::install(httplib::Server& server) {
  auto read = [this](auto fn) {
    return [this, fn](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        Entry& e = entry(session_id(req));
        std::shared_lock lock(e.mutex);
        fn(*e.session, req, res);
      });
    };
  };
  auto write = [this](auto fn) {
    return [this, fn](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        Entry& e = entry(session_id(req));
        std::unique_lock lock(e.mutex);
        fn(*e.session, req, res);
      });
    };
  };
  auto reply = [](httplib::Response& res, const json& body) {
    res.set_content(body.dump(), "application/json");
  };

  server.Get("/api/scene", read([reply](Session& s, const httplib::Request&, httplib::Response& res) {
               reply(res, s.scene_json());
             }));
  server.Get("/api/scene/image", read([](Session& s, const httplib::Request&, httplib::Response& res) {
               res.set_content(s.scene_image(), "image/bmp");
             }));
  server.Post("/api/sketch", write([reply](Session& s, const httplib::Request& req, httplib::Response& res) {
                reply(res, s.add_sketch(parse_body(req)));
              }));
  server.Delete("/api/sketch", write([reply](Session& s, const httplib::Request&, httplib::Response& res) {
                  reply(res, s.clear_sketches());
                }));
  server.Post("/api/fit", write([reply](Session& s, const httplib::Request& req, httplib::Response& res) {
                reply(res, s.fit(parse_body(req)));
              }));
  server.Post("/api/solve", write([reply](Session& s, const httplib::Request& req, httplib::Response& res) {
                reply(res, s.solve(parse_body(req)));
              }));
  server.Get(R"(/api/result/(\d+))",
             read([reply](Session& s, const httplib::Request& req, httplib::Response& res) {
               reply(res, s.result(std::stoi(req.matches[1].str())));
             }));
}

std::string encode_bmp(int width, int height, const std::vector<std::uint8_t>& gray) {
  if (width <= 0 || height <= 0 || gray.size() != static_cast<std::size_t>(width) * height) {
    throw Error(ErrorCode::kShape, "image size does not match its pixels");
  }
  const std::uint32_t row = (static_cast<std::uint32_t>(width) * 3 + 3) & ~3U;
  const std::uint32_t data = row * static_cast<std::uint32_t>(height);
  std::string out;
  out.reserve(54 + data);
  auto u16 = [&](std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
  };
  auto u32 = [&](std::uint32_t v) {
    u16(v & 0xFFFF);
    u16(v >> 16);
  };
  out += "BM";
  u32(54 + data);
  u32(0);
  u32(54);
  u32(40);
  u32(static_cast<std::uint32_t>(width));
  u32(static_cast<std::uint32_t>(height));  // bottom-up rows
  u16(1);
  u16(24);
  u32(0);
  u32(data);
  u32(2835);
  u32(2835);
  u32(0);
  u32(0);
  for (int y = height - 1; y >= 0; --y) {
    std::uint32_t written = 0;
    for (int x = 0; x < width; ++x) {
      const char g = static_cast<char>(gray[static_cast<std::size_t>(y) * width + x]);
      out.append(3, g);
      written += 3;
    }
    out.append(row - written, '\0');
  }
  return out;
}

void serve(Service& service, const std::string& host, int port) {
  httplib::Server server;
  service.install(server);
  server.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  if (!server.bind_to_port(host, port)) {
    throw Error(ErrorCode::kPortInUse, "cannot bind " + host + ":" + std::to_string(port));
  }
  server.listen_after_bind();
}

}  // namespace sdi::service
