#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include <Eigen/Geometry>

#include "sdi/datasets.hpp"
#include "sdi/error.hpp"
#include "sdi/random.hpp"

namespace sdi::datasets {

namespace {

using geometry::RegionLabel;
using geometry::Sketch;

constexpr int kWidth = 320;
constexpr int kHeight = 240;
constexpr double kFocal = 280.0;
constexpr double kInset = 0.01;     // ROI rectangles sit this far inside their face
constexpr double kJitter = 0.03;    // per-furniture layout jitter for seed != 0
constexpr double kFloorHalf = 4.0;  // floor extent around the origin

struct Box {
  Eigen::Vector3d lo;
  Eigen::Vector3d hi;
};

struct Sphere {
  Eigen::Vector3d center;
  double radius;
};

struct Layout {
  std::vector<Box> boxes;
  std::vector<Sphere> spheres;
  std::vector<Surface> roi;             // rectangles or spheres to sketch
  std::optional<Box> permissible;       // floor rectangle (z ignored)
};

geometry::CameraModel make_camera() {
  const Eigen::Vector3d eye(0.0, -3.4, 2.6);
  const Eigen::Vector3d target(0.0, 0.2, 0.3);
  const Eigen::Vector3d forward = (target - eye).normalized();
  const Eigen::Vector3d right = forward.cross(Eigen::Vector3d::UnitZ()).normalized();
  const Eigen::Vector3d down = forward.cross(right);
  geometry::CameraModel cam;
  cam.fx = cam.fy = kFocal;
  cam.cx = (kWidth - 1) / 2.0;
  cam.cy = (kHeight - 1) / 2.0;
  cam.rotation.col(0) = right;
  cam.rotation.col(1) = down;
  cam.rotation.col(2) = forward;
  cam.translation = eye;
  return cam;
}

// Ray parameter t along origin + t * dir of the first hit, if any.
std::optional<double> hit_box(const Box& b, const Eigen::Vector3d& o, const Eigen::Vector3d& d) {
  double t0 = 0.0;
  double t1 = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 3; ++k) {
    if (std::abs(d(k)) < 1e-15) {
      if (o(k) < b.lo(k) || o(k) > b.hi(k)) return std::nullopt;
      continue;
    }
    double a = (b.lo(k) - o(k)) / d(k);
    double c = (b.hi(k) - o(k)) / d(k);
    if (a > c) std::swap(a, c);
    t0 = std::max(t0, a);
    t1 = std::min(t1, c);
    if (t0 > t1) return std::nullopt;
  }
  return t0;
}

std::optional<double> hit_sphere(const Sphere& s, const Eigen::Vector3d& o, const Eigen::Vector3d& d) {
  const Eigen::Vector3d oc = o - s.center;
  const double a = d.squaredNorm();
  const double b = oc.dot(d);
  const double c = oc.squaredNorm() - s.radius * s.radius;
  const double disc = b * b - a * c;
  if (disc < 0.0) return std::nullopt;
  const double t = (-b - std::sqrt(disc)) / a;
  if (t <= 0.0) return std::nullopt;
  return t;
}

geometry::DepthGrid render(const geometry::CameraModel& cam, const Layout& layout) {
  std::vector<float> values(static_cast<std::size_t>(kWidth) * kHeight);
  const Eigen::Vector3d& o = cam.translation;
  for (int v = 0; v < kHeight; ++v) {
    for (int u = 0; u < kWidth; ++u) {
      // Camera-frame direction with unit z, so the ray parameter is z-depth.
      const Eigen::Vector3d d =
          cam.rotation * Eigen::Vector3d((u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0);
      double best = std::numeric_limits<double>::infinity();
      for (const auto& b : layout.boxes) {
        if (auto t = hit_box(b, o, d)) best = std::min(best, *t);
      }
      for (const auto& s : layout.spheres) {
        if (auto t = hit_sphere(s, o, d)) best = std::min(best, *t);
      }
      if (d.z() < 0.0) {
        const double t = -o.z() / d.z();
        const Eigen::Vector3d p = o + t * d;
        if (std::abs(p.x()) <= kFloorHalf && std::abs(p.y()) <= kFloorHalf) best = std::min(best, t);
      }
      values[static_cast<std::size_t>(v) * kWidth + u] =
          std::isfinite(best) ? static_cast<float>(best) : std::numeric_limits<float>::quiet_NaN();
    }
  }
  return geometry::DepthGrid::from_values(kWidth, kHeight, std::move(values));
}

Eigen::Vector2d to_pixel(const geometry::CameraModel& cam, const Eigen::Vector3d& p) {
  return geometry::reproject_point(cam, p).head<2>();
}

Sketch sketch_rectangle(const geometry::CameraModel& cam, const Surface& s, RegionLabel label) {
  Sketch sk;
  sk.label = label;
  for (auto [a, b] : {std::pair{-1.0, -1.0}, {1.0, -1.0}, {1.0, 1.0}, {-1.0, 1.0}}) {
    sk.vertices.push_back(to_pixel(cam, s.center + a * s.half_u + b * s.half_v));
  }
  return sk;
}

// Polygon inside the silhouette: a circle of 0.9 r perpendicular to the view.
Sketch sketch_sphere(const geometry::CameraModel& cam, const Surface& s) {
  const Eigen::Vector3d view = (s.center - cam.translation).normalized();
  const Eigen::Vector3d a = view.cross(Eigen::Vector3d::UnitZ()).normalized();
  const Eigen::Vector3d b = view.cross(a);
  Sketch sk;
  sk.label = RegionLabel::kRegionOfInterest;
  for (int i = 0; i < 24; ++i) {
    const double phi = 2.0 * std::numbers::pi * i / 24.0;
    sk.vertices.push_back(
        to_pixel(cam, s.center + 0.9 * s.radius * (std::cos(phi) * a + std::sin(phi) * b)));
  }
  return sk;
}

// Horizontal ROI on top of a box, inset from the edges.
Surface top_of(const Box& b) {
  Surface s;
  s.center = {(b.lo.x() + b.hi.x()) / 2.0, (b.lo.y() + b.hi.y()) / 2.0, b.hi.z()};
  s.half_u = {(b.hi.x() - b.lo.x()) / 2.0 - kInset, 0.0, 0.0};
  s.half_v = {0.0, (b.hi.y() - b.lo.y()) / 2.0 - kInset, 0.0};
  return s;
}

// Vertical ROI on the camera-facing (min y) side of a box.
Surface front_of(const Box& b, double z_lo, double z_hi) {
  Surface s;
  s.center = {(b.lo.x() + b.hi.x()) / 2.0, b.lo.y(), (z_lo + z_hi) / 2.0};
  s.half_u = {(b.hi.x() - b.lo.x()) / 2.0 - kInset, 0.0, 0.0};
  s.half_v = {0.0, 0.0, (z_hi - z_lo) / 2.0};
  return s;
}

Box box(double x0, double y0, double z0, double x1, double y1, double z1) {
  return {{x0, y0, z0}, {x1, y1, z1}};
}

Layout make_layout(std::string_view name, Rng& rng, bool jitter) {
  auto shift = [&](Box b) {
    if (!jitter) return b;
    const Eigen::Vector3d d(uniform(rng, -kJitter, kJitter), uniform(rng, -kJitter, kJitter), 0.0);
    b.lo += d;
    b.hi += d;
    return b;
  };
  Layout l;
  if (name == "tables-a") {
    Box t1 = shift(box(-0.75, 0.0, 0.0, -0.15, 0.5, 0.5));
    Box t2 = shift(box(0.15, 0.0, 0.0, 0.75, 0.5, 0.5));
    l.boxes = {t1, t2};
    l.roi = {top_of(t1), top_of(t2)};
    l.permissible = box(-1.5, -1.1, 0.0, 1.5, -0.25, 0.0);
  } else if (name == "tables-b") {
    Box t1 = shift(box(-1.45, 0.0, 0.0, -0.85, 0.5, 0.5));
    Box t2 = shift(box(0.85, 0.0, 0.0, 1.45, 0.5, 0.5));
    l.boxes = {t1, t2};
    l.roi = {top_of(t1), top_of(t2)};
    l.permissible = box(-1.7, -1.1, 0.0, 1.7, -0.25, 0.0);
  } else if (name == "drawer") {
    Box cabinet = shift(box(-0.3, 0.2, 0.0, 0.3, 0.7, 0.75));
    Box drawer = box(cabinet.lo.x() + 0.05, cabinet.lo.y() - 0.35, 0.35, cabinet.hi.x() - 0.05,
                     cabinet.lo.y(), 0.55);
    l.boxes = {cabinet, drawer};
    l.roi = {top_of(drawer)};
    l.permissible = box(-1.2, -1.1, 0.0, 1.2, -0.45, 0.0);
  } else if (name == "mixed") {
    Box table = shift(box(-0.65, 0.0, 0.0, -0.05, 0.5, 0.5));
    Box cabinet = shift(box(0.1, 0.1, 0.0, 0.6, 0.5, 0.9));
    l.boxes = {table, cabinet};
    l.roi = {top_of(table), front_of(cabinet, 0.3, 0.8)};
    l.permissible = box(-1.5, -1.1, 0.0, 1.5, -0.25, 0.0);
  } else if (name == "ball") {
    Box pedestal = shift(box(-0.04, 0.26, 0.0, 0.04, 0.34, 0.42));
    Sphere ball{{(pedestal.lo.x() + pedestal.hi.x()) / 2.0, (pedestal.lo.y() + pedestal.hi.y()) / 2.0,
                 0.55},
                0.12};
    l.boxes = {pedestal};
    l.spheres = {ball};
    Surface s;
    s.kind = Surface::Kind::kSphere;
    s.center = ball.center;
    s.radius = ball.radius;
    l.roi = {s};
  } else {
    throw Error(ErrorCode::kConfiguration, "unknown scene '" + std::string(name) + "'");
  }
  return l;
}

}  // namespace

double Surface::distance(const Eigen::Vector3d& p) const {
  if (kind == Kind::kSphere) return std::abs((p - center).norm() - radius);
  const Eigen::Vector3d d = p - center;
  const double lu = half_u.squaredNorm();
  const double lv = half_v.squaredNorm();
  const double a = lu > 0.0 ? std::clamp(d.dot(half_u) / lu, -1.0, 1.0) : 0.0;
  const double b = lv > 0.0 ? std::clamp(d.dot(half_v) / lv, -1.0, 1.0) : 0.0;
  return (d - a * half_u - b * half_v).norm();
}

void Limits::validate() const {
  if (!std::isfinite(z_min) || !std::isfinite(z_max) || !(z_min <= z_max)) {
    throw Error(ErrorCode::kInvalidScene, "height limits need z_min <= z_max");
  }
  if (!std::isfinite(omega_min) || !std::isfinite(omega_max) || !(omega_min <= omega_max)) {
    throw Error(ErrorCode::kInvalidScene, "yaw limits need omega_min <= omega_max");
  }
}

bool SceneSpec::constrained() const {
  return std::any_of(sketches.begin(), sketches.end(),
                     [](const Sketch& s) { return s.label == RegionLabel::kPermissible; });
}

void SceneSpec::validate() const {
  camera.validate();
  depth.validate();
  limits.validate();
  if (std::none_of(sketches.begin(), sketches.end(),
                   [](const Sketch& s) { return s.label == RegionLabel::kRegionOfInterest; })) {
    throw Error(ErrorCode::kInvalidScene, "scene has no ROI sketch");
  }
  for (const auto& s : sketches) s.validate(depth.width, depth.height);
}

const std::vector<std::string>& scene_names() {
  static const std::vector<std::string> names{"tables-a", "tables-b", "drawer", "mixed", "ball"};
  return names;
}

const std::vector<std::string>& benchmark_scene_names() {
  static const std::vector<std::string> names{"tables-a", "tables-b", "drawer", "mixed"};
  return names;
}

SceneSpec generate_scene(std::string_view name, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x5CE));
  Layout layout = make_layout(name, rng, seed != 0);

  SceneSpec scene;
  scene.name = std::string(name);
  scene.camera = make_camera();
  scene.depth = render(scene.camera, layout);
  for (const auto& s : layout.roi) {
    scene.sketches.push_back(s.kind == Surface::Kind::kSphere
                                 ? sketch_sphere(scene.camera, s)
                                 : sketch_rectangle(scene.camera, s, RegionLabel::kRegionOfInterest));
  }
  if (layout.permissible) {
    const Box& f = *layout.permissible;
    Surface floor;
    floor.center = {(f.lo.x() + f.hi.x()) / 2.0, (f.lo.y() + f.hi.y()) / 2.0, 0.0};
    floor.half_u = {(f.hi.x() - f.lo.x()) / 2.0, 0.0, 0.0};
    floor.half_v = {0.0, (f.hi.y() - f.lo.y()) / 2.0, 0.0};
    scene.sketches.push_back(sketch_rectangle(scene.camera, floor, RegionLabel::kPermissible));
  }
  scene.truth = layout.roi;
  scene.validate();
  return scene;
}

namespace {

geometry::PointSet collect(const SceneSpec& scene, RegionLabel label) {
  geometry::PointSet out;
  out.label = label;
  for (const auto& s : scene.sketches) {
    if (s.label != label) continue;
    auto part = geometry::project_sketch(scene.camera, scene.depth, s);
    out.points.insert(out.points.end(), part.points.begin(), part.points.end());
  }
  return out;
}

}  // namespace

geometry::PointSet roi_points(const SceneSpec& scene) {
  return collect(scene, RegionLabel::kRegionOfInterest);
}

geometry::PointSet permissible_points(const SceneSpec& scene) {
  return collect(scene, RegionLabel::kPermissible);
}

}  // namespace sdi::datasets
