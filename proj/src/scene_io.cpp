#include <json.hpp>

#include "sdi/binary_io.hpp"
#include "sdi/datasets.hpp"
#include "sdi/error.hpp"

namespace sdi::datasets {

namespace {

using nlohmann::json;

json vec(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

Eigen::Vector3d vec3(const json& j) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorCode::kParse, "expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json surface_json(const Surface& s) {
  if (s.kind == Surface::Kind::kSphere) {
    return {{"kind", "sphere"}, {"center", vec(s.center)}, {"radius", s.radius}};
  }
  return {{"kind", "rectangle"},
          {"center", vec(s.center)},
          {"half_u", vec(s.half_u)},
          {"half_v", vec(s.half_v)}};
}

Surface parse_surface(const json& j) {
  Surface s;
  const std::string kind = j.at("kind").get<std::string>();
  s.center = vec3(j.at("center"));
  if (kind == "sphere") {
    s.kind = Surface::Kind::kSphere;
    s.radius = j.at("radius").get<double>();
  } else if (kind == "rectangle") {
    s.half_u = vec3(j.at("half_u"));
    s.half_v = vec3(j.at("half_v"));
  } else {
    throw Error(ErrorCode::kParse, "unknown truth surface kind '" + kind + "'");
  }
  return s;
}

}  // namespace

void save_scene(const SceneSpec& scene, const std::filesystem::path& path) {
  scene.validate();
  const std::filesystem::path depth_name = path.stem().string() + ".depth";
  geometry::write_depth_file(path.parent_path() / depth_name, scene.depth);

  const auto& c = scene.camera;
  json rotation = json::array();
  for (int r = 0; r < 3; ++r) rotation.push_back({c.rotation(r, 0), c.rotation(r, 1), c.rotation(r, 2)});
  json sketches = json::array();
  for (const auto& s : scene.sketches) {
    json vertices = json::array();
    for (const auto& v : s.vertices) vertices.push_back({v.x(), v.y()});
    sketches.push_back({{"label", std::string(geometry::label_name(s.label))}, {"vertices", vertices}});
  }
  json truth = json::array();
  for (const auto& s : scene.truth) truth.push_back(surface_json(s));

  json doc = {
      {"name", scene.name},
      {"camera",
       {{"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy}, {"rotation", rotation},
        {"translation", vec(c.translation)}}},
      {"depth_file", depth_name.string()},
      {"sketches", sketches},
      {"limits",
       {{"z_min", scene.limits.z_min},
        {"z_max", scene.limits.z_max},
        {"omega_min", scene.limits.omega_min},
        {"omega_max", scene.limits.omega_max}}},
      {"truth", truth},
  };
  io::write_text_file(path, doc.dump(2) + "\n");
}

SceneSpec load_scene(const std::filesystem::path& path) {
  const std::string text = io::read_text_file(path);
  SceneSpec scene;
  try {
    const json doc = json::parse(text);
    scene.name = doc.value("name", path.stem().string());
    const json& c = doc.at("camera");
    scene.camera.fx = c.at("fx").get<double>();
    scene.camera.fy = c.at("fy").get<double>();
    scene.camera.cx = c.at("cx").get<double>();
    scene.camera.cy = c.at("cy").get<double>();
    const json& rot = c.at("rotation");
    if (!rot.is_array() || rot.size() != 3) throw Error(ErrorCode::kParse, "rotation must be 3x3");
    for (int r = 0; r < 3; ++r) scene.camera.rotation.row(r) = vec3(rot[r]).transpose();
    scene.camera.translation = vec3(c.at("translation"));

    for (const json& s : doc.at("sketches")) {
      geometry::Sketch sketch;
      sketch.label = geometry::parse_label(s.at("label").get<std::string>());
      for (const json& v : s.at("vertices")) {
        if (!v.is_array() || v.size() != 2) throw Error(ErrorCode::kParse, "vertex must be [u, v]");
        sketch.vertices.emplace_back(v[0].get<double>(), v[1].get<double>());
      }
      scene.sketches.push_back(std::move(sketch));
    }
    if (doc.contains("limits")) {
      const json& l = doc["limits"];
      scene.limits.z_min = l.value("z_min", scene.limits.z_min);
      scene.limits.z_max = l.value("z_max", scene.limits.z_max);
      scene.limits.omega_min = l.value("omega_min", scene.limits.omega_min);
      scene.limits.omega_max = l.value("omega_max", scene.limits.omega_max);
    }
    if (doc.contains("truth")) {
      for (const json& s : doc["truth"]) scene.truth.push_back(parse_surface(s));
    }
    std::filesystem::path depth = doc.at("depth_file").get<std::string>();
    if (depth.is_relative()) depth = path.parent_path() / depth;
    scene.depth = geometry::read_depth_file(depth);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, path.string() + ": " + e.what());
  }
  scene.validate();
  return scene;
}

}  // namespace sdi::datasets
