#pragma once

#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace sdi::geometry {

/// Pinhole camera with world-frame extrinsics. A pixel (u, v) with z-depth z
/// maps to rotation * [(u - cx) z / fx, (v - cy) z / fy, z] + translation.
struct CameraModel {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  /// Throws kConfiguration unless fx, fy > 0 and rotation is a proper
  /// rotation (orthonormal, det 1) within 1e-9.
  void validate() const;
};

/// Row-major z-depth image with an explicit validity mask.
struct DepthGrid {
  int width = 0;
  int height = 0;
  std::vector<float> values;
  std::vector<std::uint8_t> valid;

  /// Builds a grid from raw values; NaN, infinite and non-positive entries
  /// are marked invalid.
  static DepthGrid from_values(int width, int height, std::vector<float> values);

  bool is_valid(int u, int v) const { return valid[index(u, v)] != 0; }
  float at(int u, int v) const { return values[index(u, v)]; }
  std::size_t index(int u, int v) const {
    return static_cast<std::size_t>(v) * static_cast<std::size_t>(width) +
           static_cast<std::size_t>(u);
  }

  void validate() const;
};

enum class RegionLabel { kRegionOfInterest, kPermissible };

std::string_view label_name(RegionLabel label);
RegionLabel parse_label(std::string_view text);

struct Pixel {
  int u = 0;
  int v = 0;
  friend bool operator==(const Pixel&, const Pixel&) = default;
};

/// Closed polygon drawn on the image, in pixel coordinates.
struct Sketch {
  std::vector<Eigen::Vector2d> vertices;
  RegionLabel label = RegionLabel::kRegionOfInterest;

  /// Checks vertex count, non-zero area, simplicity and image bounds.
  /// Degenerate polygons raise kEmptyRegion, the rest kInvalidScene.
  void validate(int width, int height) const;
};

struct PointSet {
  std::vector<Eigen::Vector3d> points;
  RegionLabel label = RegionLabel::kRegionOfInterest;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

/// Column-per-point matrix view of a point set, optionally keeping only the
/// first `dims` coordinates (2 extracts the x, y footprint).
Eigen::MatrixXd to_matrix(const PointSet& set, int dims = 3);

double polygon_area(const std::vector<Eigen::Vector2d>& vertices);
bool polygon_is_simple(const std::vector<Eigen::Vector2d>& vertices);

/// Integer pixel centres inside or on the boundary of the polygon under the
/// even-odd rule, clipped to the image and ordered row-major.
std::vector<Pixel> enclosed_pixels(const Sketch& sketch, int width, int height);

Eigen::Vector3d project_pixel(const CameraModel& camera, double u, double v, double z);

/// Inverse of project_pixel for a point in front of the camera: returns the
/// pixel coordinates and z-depth.
Eigen::Vector3d reproject_point(const CameraModel& camera, const Eigen::Vector3d& world);

PointSet project_sketch(const CameraModel& camera, const DepthGrid& depth,
                        const Sketch& sketch);

// Binary depth payload: "SDID", u32 width, u32 height, u32 flags, then
// row-major little-endian float32 with NaN for invalid pixels.
void write_depth_file(const std::filesystem::path& path, const DepthGrid& grid);
DepthGrid read_depth_file(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_depth(const DepthGrid& grid);
DepthGrid decode_depth(const std::vector<std::uint8_t>& bytes);

}  // namespace sdi::geometry
