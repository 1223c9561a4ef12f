#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "sdi/datasets.hpp"
#include "sdi/error.hpp"
#include "sdi/random.hpp"

namespace sdi::datasets {

namespace {

constexpr std::array<std::pair<ShapeKind, std::string_view>, 5> kNames{{
    {ShapeKind::kCuboid, "cuboid"},
    {ShapeKind::kPlane, "plane"},
    {ShapeKind::kCircle, "circle"},
    {ShapeKind::kPlaneCircle, "plane+circle"},
    {ShapeKind::kStar, "star"},
}};

// Vertices of a five-point star, alternating outer and inner radius.
std::array<Eigen::Vector2d, 10> star_vertices(double outer, double inner) {
  std::array<Eigen::Vector2d, 10> out;
  for (int i = 0; i < 10; ++i) {
    double r = (i % 2 == 0) ? outer : inner;
    double a = std::numbers::pi / 2.0 + i * std::numbers::pi / 5.0;
    out[i] = {r * std::cos(a), r * std::sin(a)};
  }
  return out;
}

bool inside_star(const std::array<Eigen::Vector2d, 10>& poly, const Eigen::Vector2d& p) {
  bool in = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const auto& a = poly[i];
    const auto& b = poly[j];
    if ((a.y() > p.y()) != (b.y() > p.y()) &&
        p.x() < (b.x() - a.x()) * (p.y() - a.y()) / (b.y() - a.y()) + a.x()) {
      in = !in;
    }
  }
  return in;
}

Eigen::Vector3d ring_point(double radius, Rng& rng) {
  double a = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  return {radius * std::cos(a), radius * std::sin(a), 0.0};
}

Eigen::Vector3d plane_point(double sx, double sy, Rng& rng) {
  return {uniform(rng, -0.5 * sx, 0.5 * sx), uniform(rng, -0.5 * sy, 0.5 * sy), 0.0};
}

}  // namespace

std::string_view shape_name(ShapeKind kind) {
  for (const auto& [k, name] : kNames) {
    if (k == kind) return name;
  }
  throw Error(ErrorCode::kConfiguration, "unknown shape kind");
}

ShapeKind parse_shape(std::string_view name) {
  for (const auto& [k, n] : kNames) {
    if (n == name) return k;
  }
  throw Error(ErrorCode::kConfiguration, "unknown shape '" + std::string(name) + "'");
}

const std::vector<ShapeKind>& all_shapes() {
  static const std::vector<ShapeKind> kinds{ShapeKind::kCuboid, ShapeKind::kPlane,
                                            ShapeKind::kCircle, ShapeKind::kPlaneCircle,
                                            ShapeKind::kStar};
  return kinds;
}

void ShapeSpec::validate() const {
  if (count <= 0) throw Error(ErrorCode::kConfiguration, "sample count must be > 0");
  if (!(noise >= 0.0) || !std::isfinite(noise)) {
    throw Error(ErrorCode::kConfiguration, "noise must be >= 0");
  }
  if (!extents.allFinite() || (extents.array() < 0.0).any()) {
    throw Error(ErrorCode::kConfiguration, "extents must be finite and >= 0");
  }
  if (kind == ShapeKind::kPlaneCircle && (!(gap >= 0.0) || !(plane_fraction >= 0.0) ||
                                          !(plane_fraction <= 1.0))) {
    throw Error(ErrorCode::kConfiguration, "plane+circle needs gap >= 0 and a fraction in [0, 1]");
  }
  if (kind == ShapeKind::kStar && !(extents.y() < extents.x())) {
    throw Error(ErrorCode::kConfiguration, "star inner radius must be below the outer radius");
  }
  shape_name(kind);
}

ShapeSpec default_shape(ShapeKind kind, std::uint64_t seed) {
  ShapeSpec spec;
  spec.kind = kind;
  spec.seed = seed;
  switch (kind) {
    case ShapeKind::kCuboid:
      spec.extents = {0.3, 0.2, 0.15};
      break;
    case ShapeKind::kPlane:
      spec.extents = {0.4, 0.3, 0.0};
      break;
    case ShapeKind::kCircle:
      spec.extents = {0.15, 0.0, 0.0};
      break;
    case ShapeKind::kPlaneCircle:
      spec.extents = {0.3, 0.3, 0.12};
      break;
    case ShapeKind::kStar:
      spec.extents = {0.2, 0.08, 0.0};
      break;
  }
  return spec;
}

geometry::PointSet generate_shape(const ShapeSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, 0x5A9E));
  std::normal_distribution<double> gauss(0.0, 1.0);
  const auto star = star_vertices(spec.extents.x(), spec.extents.y());
  const auto& e = spec.extents;

  geometry::PointSet out;
  out.points.reserve(static_cast<std::size_t>(spec.count));
  const int plane_count = static_cast<int>(std::lround(spec.plane_fraction * spec.count));
  for (int i = 0; i < spec.count; ++i) {
    Eigen::Vector3d p;
    switch (spec.kind) {
      case ShapeKind::kCuboid:
        p = {uniform(rng, -0.5 * e.x(), 0.5 * e.x()), uniform(rng, -0.5 * e.y(), 0.5 * e.y()),
             uniform(rng, -0.5 * e.z(), 0.5 * e.z())};
        break;
      case ShapeKind::kPlane:
        p = plane_point(e.x(), e.y(), rng);
        break;
      case ShapeKind::kCircle:
        p = ring_point(e.x(), rng);
        break;
      case ShapeKind::kPlaneCircle:
        if (i < plane_count) {
          p = plane_point(e.x(), e.y(), rng);
          p.x() -= 0.5 * (e.x() + spec.gap);
        } else {
          p = ring_point(e.z(), rng);
          p.x() += 0.5 * spec.gap + e.z();
        }
        break;
      case ShapeKind::kStar:
        do {
          p = {uniform(rng, -e.x(), e.x()), uniform(rng, -e.x(), e.x()), 0.0};
        } while (!inside_star(star, p.head<2>()));
        break;
    }
    if (spec.noise > 0.0) {
      for (int k = 0; k < 3; ++k) p(k) += spec.noise * gauss(rng);
    }
    out.points.push_back(p);
  }
  return out;
}

}  // namespace sdi::datasets
