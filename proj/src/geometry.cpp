#include "sdi/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "sdi/binary_io.hpp"
#include "sdi/error.hpp"

namespace sdi::geometry {

namespace {

constexpr double kBoundaryTolerance = 1e-9;

double cross(const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  return a.x() * b.y() - a.y() * b.x();
}

int orientation(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c) {
  double value = cross(b - a, c - a);
  if (std::abs(value) <= 1e-12) return 0;
  return value > 0 ? 1 : -1;
}

bool on_segment(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& p) {
  return std::min(a.x(), b.x()) - 1e-12 <= p.x() && p.x() <= std::max(a.x(), b.x()) + 1e-12 &&
         std::min(a.y(), b.y()) - 1e-12 <= p.y() && p.y() <= std::max(a.y(), b.y()) + 1e-12;
}

bool segments_intersect(const Eigen::Vector2d& p1, const Eigen::Vector2d& p2,
                        const Eigen::Vector2d& q1, const Eigen::Vector2d& q2) {
  int o1 = orientation(p1, p2, q1);
  int o2 = orientation(p1, p2, q2);
  int o3 = orientation(q1, q2, p1);
  int o4 = orientation(q1, q2, p2);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_segment(p1, p2, q1)) return true;
  if (o2 == 0 && on_segment(p1, p2, q2)) return true;
  if (o3 == 0 && on_segment(q1, q2, p1)) return true;
  if (o4 == 0 && on_segment(q1, q2, p2)) return true;
  return false;
}

}  // namespace

void CameraModel::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw Error(ErrorCode::kConfiguration, "camera focal lengths must be positive");
  }
  if (!std::isfinite(cx) || !std::isfinite(cy) || !translation.allFinite()) {
    throw Error(ErrorCode::kConfiguration, "camera parameters must be finite");
  }
  Eigen::Matrix3d gram = rotation.transpose() * rotation;
  if ((gram - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-9 ||
      std::abs(rotation.determinant() - 1.0) > 1e-9) {
    throw Error(ErrorCode::kConfiguration, "camera rotation is not a proper rotation");
  }
}

DepthGrid DepthGrid::from_values(int width, int height, std::vector<float> values) {
  if (width <= 0 || height <= 0 ||
      values.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
    throw Error(ErrorCode::kShape, "depth values do not match grid dimensions");
  }
  DepthGrid grid;
  grid.width = width;
  grid.height = height;
  grid.valid.resize(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    bool ok = std::isfinite(values[i]) && values[i] > 0.0F;
    grid.valid[i] = ok ? 1 : 0;
    if (!ok) values[i] = std::numeric_limits<float>::quiet_NaN();
  }
  grid.values = std::move(values);
  return grid;
}

void DepthGrid::validate() const {
  std::size_t expected = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  if (width <= 0 || height <= 0 || values.size() != expected || valid.size() != expected) {
    throw Error(ErrorCode::kShape, "depth grid size mismatch");
  }
  for (std::size_t i = 0; i < expected; ++i) {
    if (valid[i] && !(std::isfinite(values[i]) && values[i] > 0.0F)) {
      throw Error(ErrorCode::kInvalidDepth, "valid depth entry is not finite and positive");
    }
  }
}

std::string_view label_name(RegionLabel label) {
  return label == RegionLabel::kRegionOfInterest ? "roi" : "permissible";
}

RegionLabel parse_label(std::string_view text) {
  if (text == "roi") return RegionLabel::kRegionOfInterest;
  if (text == "permissible") return RegionLabel::kPermissible;
  throw Error(ErrorCode::kParse, "unknown sketch label '" + std::string(text) + "'");
}

Eigen::MatrixXd to_matrix(const PointSet& set, int dims) {
  Eigen::MatrixXd out(dims, static_cast<Eigen::Index>(set.size()));
  for (std::size_t i = 0; i < set.size(); ++i) {
    out.col(static_cast<Eigen::Index>(i)) = set.points[i].head(dims);
  }
  return out;
}

double polygon_area(const std::vector<Eigen::Vector2d>& vertices) {
  double twice = 0.0;
  for (std::size_t i = 0; i < vertices.size(); ++i) {
    twice += cross(vertices[i], vertices[(i + 1) % vertices.size()]);
  }
  return 0.5 * twice;
}

bool polygon_is_simple(const std::vector<Eigen::Vector2d>& vertices) {
  std::size_t n = vertices.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
      const auto& a1 = vertices[i];
      const auto& a2 = vertices[(i + 1) % n];
      const auto& b1 = vertices[j];
      const auto& b2 = vertices[(j + 1) % n];
      if (adjacent) {
        // Adjacent edges share one vertex; they may only overlap if collinear
        // and folding back on each other.
        const auto& shared = (j == i + 1) ? a2 : a1;
        const auto& other_a = (j == i + 1) ? a1 : a2;
        const auto& other_b = (j == i + 1) ? b2 : b1;
        if (orientation(other_a, shared, other_b) == 0 &&
            (other_a - shared).dot(other_b - shared) > 0.0) {
          return false;
        }
        continue;
      }
      if (segments_intersect(a1, a2, b1, b2)) return false;
    }
  }
  return true;
}

void Sketch::validate(int width, int height) const {
  if (vertices.size() < 3) {
    throw Error(ErrorCode::kEmptyRegion, "sketch needs at least 3 vertices");
  }
  for (const auto& p : vertices) {
    if (!p.allFinite() || p.x() < 0.0 || p.y() < 0.0 || p.x() > width - 1 || p.y() > height - 1) {
      throw Error(ErrorCode::kInvalidScene, "sketch vertex outside the image");
    }
  }
  if (std::abs(polygon_area(vertices)) < 1e-12) {
    throw Error(ErrorCode::kEmptyRegion, "sketch polygon has zero area");
  }
  if (!polygon_is_simple(vertices)) {
    throw Error(ErrorCode::kInvalidScene, "sketch polygon self-intersects");
  }
}

std::vector<Pixel> enclosed_pixels(const Sketch& sketch, int width, int height) {
  const auto& poly = sketch.vertices;
  if (poly.size() < 3 || std::abs(polygon_area(poly)) < 1e-12) {
    throw Error(ErrorCode::kEmptyRegion, "sketch polygon is degenerate");
  }
  double min_y = poly[0].y(), max_y = poly[0].y();
  for (const auto& p : poly) {
    min_y = std::min(min_y, p.y());
    max_y = std::max(max_y, p.y());
  }
  int v_begin = std::max(0, static_cast<int>(std::ceil(min_y - kBoundaryTolerance)));
  int v_end = std::min(height - 1, static_cast<int>(std::floor(max_y + kBoundaryTolerance)));

  std::vector<Pixel> out;
  std::vector<std::uint8_t> row(static_cast<std::size_t>(std::max(width, 0)));
  std::vector<double> crossings;
  const std::size_t n = poly.size();

  auto mark = [&](double lo, double hi) {
    int a = std::max(0, static_cast<int>(std::ceil(lo - kBoundaryTolerance)));
    int b = std::min(width - 1, static_cast<int>(std::floor(hi + kBoundaryTolerance)));
    for (int u = a; u <= b; ++u) row[static_cast<std::size_t>(u)] = 1;
  };

  for (int v = v_begin; v <= v_end; ++v) {
    std::fill(row.begin(), row.end(), 0);
    crossings.clear();
    const double y = v;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& a = poly[i];
      const auto& b = poly[(i + 1) % n];
      // Half-open crossing rule gives the even-odd parity for interior points.
      if ((a.y() <= y && y < b.y()) || (b.y() <= y && y < a.y())) {
        crossings.push_back(a.x() + (y - a.y()) * (b.x() - a.x()) / (b.y() - a.y()));
      }
      // Boundary points are always included.
      if (std::abs(a.y() - b.y()) <= kBoundaryTolerance) {
        if (std::abs(a.y() - y) <= kBoundaryTolerance) mark(std::min(a.x(), b.x()), std::max(a.x(), b.x()));
      } else if (std::min(a.y(), b.y()) - kBoundaryTolerance <= y &&
                 y <= std::max(a.y(), b.y()) + kBoundaryTolerance) {
        double x = a.x() + (y - a.y()) * (b.x() - a.x()) / (b.y() - a.y());
        double nearest = std::round(x);
        if (std::abs(x - nearest) <= kBoundaryTolerance) mark(nearest, nearest);
      }
    }
    std::sort(crossings.begin(), crossings.end());
    for (std::size_t k = 0; k + 1 < crossings.size(); k += 2) mark(crossings[k], crossings[k + 1]);
    for (int u = 0; u < width; ++u) {
      if (row[static_cast<std::size_t>(u)]) out.push_back({u, v});
    }
  }
  return out;
}

Eigen::Vector3d project_pixel(const CameraModel& camera, double u, double v, double z) {
  if (!std::isfinite(z) || z <= 0.0) {
    throw Error(ErrorCode::kInvalidDepth, "depth must be finite and positive");
  }
  Eigen::Vector3d ray((u - camera.cx) * z / camera.fx, (v - camera.cy) * z / camera.fy, z);
  return camera.rotation * ray + camera.translation;
}

Eigen::Vector3d reproject_point(const CameraModel& camera, const Eigen::Vector3d& world) {
  Eigen::Vector3d local = camera.rotation.transpose() * (world - camera.translation);
  double z = local.z();
  return {camera.fx * local.x() / z + camera.cx, camera.fy * local.y() / z + camera.cy, z};
}

PointSet project_sketch(const CameraModel& camera, const DepthGrid& depth, const Sketch& sketch) {
  sketch.validate(depth.width, depth.height);
  PointSet out;
  out.label = sketch.label;
  for (const Pixel& px : enclosed_pixels(sketch, depth.width, depth.height)) {
    if (!depth.is_valid(px.u, px.v)) continue;
    out.points.push_back(project_pixel(camera, px.u, px.v, depth.at(px.u, px.v)));
  }
  if (out.points.empty()) {
    throw Error(ErrorCode::kEmptyPointSet, "no valid depth inside the sketch");
  }
  return out;
}

std::vector<std::uint8_t> encode_depth(const DepthGrid& grid) {
  io::ByteWriter w;
  w.put_magic("SDID");
  w.put_u32(static_cast<std::uint32_t>(grid.width));
  w.put_u32(static_cast<std::uint32_t>(grid.height));
  w.put_u32(0);
  for (std::size_t i = 0; i < grid.values.size(); ++i) {
    w.put_f32(grid.valid[i] ? grid.values[i] : std::numeric_limits<float>::quiet_NaN());
  }
  return w.take();
}

DepthGrid decode_depth(const std::vector<std::uint8_t>& bytes) {
  io::ByteReader r(bytes);
  if (!r.has(16) || !r.magic("SDID")) throw Error(ErrorCode::kParse, "depth file: bad magic");
  std::uint32_t width = r.u32();
  std::uint32_t height = r.u32();
  r.u32();  // flags, reserved
  std::size_t count = static_cast<std::size_t>(width) * height;
  if (width == 0 || height == 0 || r.remaining() != 4 * count) {
    throw Error(ErrorCode::kParse, "depth file: payload size does not match header");
  }
  std::vector<float> values(count);
  for (auto& value : values) value = r.f32();
  return DepthGrid::from_values(static_cast<int>(width), static_cast<int>(height), std::move(values));
}

void write_depth_file(const std::filesystem::path& path, const DepthGrid& grid) {
  io::write_file(path, encode_depth(grid));
}

DepthGrid read_depth_file(const std::filesystem::path& path) {
  return decode_depth(io::read_file(path));
}

}  // namespace sdi::geometry
