#pragma once

#include <cstdint>
#include <filesystem>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "sdi/geometry.hpp"

namespace sdi::datasets {

enum class ShapeKind { kCuboid, kPlane, kCircle, kPlaneCircle, kStar };

std::string_view shape_name(ShapeKind kind);
ShapeKind parse_shape(std::string_view name);  // kConfiguration on unknown names
const std::vector<ShapeKind>& all_shapes();

/// Extents are interpreted per kind (all in meters):
///   cuboid        side lengths (x, y, z), centred at the origin
///   plane         side lengths (x, y) of a z = 0 rectangle
///   circle        ring radius x in the z = 0 plane
///   plane+circle  plane sides (x, y) and ring radius z, separated by `gap`
///   star          outer radius x, inner radius y of a filled five-point star
struct ShapeSpec {
  ShapeKind kind = ShapeKind::kCuboid;
  Eigen::Vector3d extents = Eigen::Vector3d::Ones();
  int count = 5000;
  double noise = 0.005;
  std::uint64_t seed = 0;
  double gap = 0.15;             // plane+circle: distance between the parts
  double plane_fraction = 0.5;   // plane+circle: share of points on the plane

  void validate() const;
};

/// The builtin desk-scale analog of each shape dataset.
ShapeSpec default_shape(ShapeKind kind, std::uint64_t seed = 0);

/// Points uniform on the ideal shape plus isotropic Gaussian noise.
geometry::PointSet generate_shape(const ShapeSpec& spec);

// ---------------------------------------------------------------------------
// Scenes

/// Ground-truth ROI surface: a planar rectangle center +- half_u +- half_v,
/// or a sphere.
struct Surface {
  enum class Kind { kRectangle, kSphere };
  Kind kind = Kind::kRectangle;
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d half_u = Eigen::Vector3d::Zero();
  Eigen::Vector3d half_v = Eigen::Vector3d::Zero();
  double radius = 0.0;

  /// Euclidean distance from p to the surface patch.
  double distance(const Eigen::Vector3d& p) const;
};

/// Base placement limits: height box and yaw box.
struct Limits {
  double z_min = 0.15;
  double z_max = 0.42;
  double omega_min = 0.0;
  double omega_max = 2.0 * std::numbers::pi;

  void validate() const;
};

struct SceneSpec {
  std::string name;
  geometry::CameraModel camera;
  geometry::DepthGrid depth;
  std::vector<geometry::Sketch> sketches;
  Limits limits;
  std::vector<Surface> truth;  // empty for scenes loaded without ground truth

  /// Throws kInvalidScene without an ROI sketch; validates every part.
  void validate() const;
  bool constrained() const;
};

/// Names accepted by generate_scene.
const std::vector<std::string>& scene_names();

/// The Table II style benchmark scenes (every builtin except "ball").
const std::vector<std::string>& benchmark_scene_names();

/// Synthetic depth scene rendered by ray casting axis-aligned furniture on a
/// floor. Seed 0 gives the canonical layout; other seeds jitter furniture by
/// up to 3 cm. Scenes: tables-a, tables-b, drawer, mixed, ball (an
/// unconstrained sphere ROI).
SceneSpec generate_scene(std::string_view name, std::uint64_t seed = 0);

/// ROI points of every ROI sketch (3D) and the x, y footprint of every
/// permissible sketch (2D, empty when unconstrained).
geometry::PointSet roi_points(const SceneSpec& scene);
geometry::PointSet permissible_points(const SceneSpec& scene);

/// JSON scene document; the depth grid lives in a sibling binary file whose
/// path is stored relative to the document.
void save_scene(const SceneSpec& scene, const std::filesystem::path& path);
SceneSpec load_scene(const std::filesystem::path& path);

}  // namespace sdi::datasets
