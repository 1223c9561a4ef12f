#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <numbers>

#include <Eigen/Geometry>

#include "sdi/binary_io.hpp"
#include "sdi/error.hpp"
#include "sdi/geometry.hpp"
#include "support.hpp"

using namespace sdi;
using namespace sdi::geometry;

namespace {

Sketch polygon(std::vector<Eigen::Vector2d> v, RegionLabel label = RegionLabel::kRegionOfInterest) {
  Sketch s;
  s.vertices = std::move(v);
  s.label = label;
  return s;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::kIo;
}

}  // namespace

TEST_SUITE("geometry") {

TEST_CASE("square fill includes its boundary") {
  const auto px = enclosed_pixels(polygon({{0, 0}, {4, 0}, {4, 4}, {0, 4}}), 10, 10);
  CHECK(px.size() == 25);
  for (const auto& p : px) {
    CHECK(p.u <= 4);
    CHECK(p.v <= 4);
  }
}

TEST_CASE("triangle fill") {
  const auto px = enclosed_pixels(polygon({{0, 0}, {2, 0}, {0, 2}}), 10, 10);
  const std::vector<Pixel> expected{{0, 0}, {1, 0}, {2, 0}, {0, 1}, {1, 1}, {0, 2}};
  CHECK(px == expected);
}

TEST_CASE("degenerate polygons raise empty-region") {
  CHECK(code_of([] { polygon({{0, 0}, {3, 3}}).validate(10, 10); }) == ErrorCode::kEmptyRegion);
  CHECK(code_of([] { enclosed_pixels(polygon({{0, 0}, {3, 3}}), 10, 10); }) == ErrorCode::kEmptyRegion);
  CHECK(code_of([] { polygon({{0, 0}, {1, 1}, {2, 2}}).validate(10, 10); }) == ErrorCode::kEmptyRegion);
}

TEST_CASE("sketch validation") {
  CHECK(code_of([] { polygon({{0, 0}, {6, 4}, {6, 0}, {0, 3}}).validate(10, 10); }) ==
        ErrorCode::kInvalidScene);
  CHECK(code_of([] { polygon({{0, 0}, {12, 0}, {0, 4}}).validate(10, 10); }) == ErrorCode::kInvalidScene);
  CHECK_NOTHROW(polygon({{0, 0}, {9, 0}, {0, 9}}).validate(10, 10));
}

TEST_CASE("fill matches the brute-force even-odd oracle") {
  Rng rng(7);
  for (int i = 0; i < 100; ++i) {
    auto v = testing::random_star_polygon(rng, 40, 30, i % 3 == 0);
    if (!polygon_is_simple(v) || std::abs(polygon_area(v)) < 1e-9) continue;
    CHECK(enclosed_pixels(polygon(v), 40, 30) == testing::brute_force_pixels(v, 40, 30));
  }
}

TEST_CASE("fill is clipped to the image and row-major") {
  const auto px = enclosed_pixels(polygon({{0, 0}, {9, 0}, {9, 9}, {0, 9}}), 5, 4);
  REQUIRE(px.size() == 20);
  for (std::size_t i = 1; i < px.size(); ++i) {
    CHECK((px[i - 1].v < px[i].v || (px[i - 1].v == px[i].v && px[i - 1].u < px[i].u)));
  }
}

TEST_CASE("project_pixel examples") {
  CameraModel cam;
  cam.cx = 3;
  cam.cy = 4;
  CHECK(project_pixel(cam, 3, 4, 2.0) == Eigen::Vector3d(0, 0, 2.0));

  CameraModel c2;
  c2.fx = c2.fy = 100;
  c2.cx = c2.cy = 50;
  CHECK(project_pixel(c2, 150, 50, 1.0).isApprox(Eigen::Vector3d(1.0, 0, 1.0), 1e-15));

  CameraModel c3;
  c3.rotation = Eigen::AngleAxisd(std::numbers::pi / 2, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  c3.translation = {1, 0, 0};
  CHECK((project_pixel(c3, 0, 0, 1.0) - Eigen::Vector3d(1, 0, 1)).norm() < 1e-15);
}

TEST_CASE("invalid depth is rejected") {
  CameraModel cam;
  CHECK(code_of([&] { project_pixel(cam, 0, 0, 0.0); }) == ErrorCode::kInvalidDepth);
  CHECK(code_of([&] { project_pixel(cam, 0, 0, -1.0); }) == ErrorCode::kInvalidDepth);
  CHECK(code_of([&] { project_pixel(cam, 0, 0, std::numeric_limits<double>::quiet_NaN()); }) ==
        ErrorCode::kInvalidDepth);
  CHECK(code_of([&] { project_pixel(cam, 0, 0, std::numeric_limits<double>::infinity()); }) ==
        ErrorCode::kInvalidDepth);
}

TEST_CASE("round trip and rigid-motion equivariance") {
  Rng rng(11);
  for (int i = 0; i < 100; ++i) {
    CameraModel cam;
    cam.fx = uniform(rng, 50, 800);
    cam.fy = uniform(rng, 50, 800);
    cam.cx = uniform(rng, 0, 300);
    cam.cy = uniform(rng, 0, 300);
    const double u = uniform(rng, 0, 640), v = uniform(rng, 0, 480), z = uniform(rng, 0.2, 8);
    const Eigen::Vector3d p = project_pixel(cam, u, v, z);
    const Eigen::Vector3d back = reproject_point(cam, p);
    CHECK(std::abs(back.x() - u) < 1e-6);
    CHECK(std::abs(back.y() - v) < 1e-6);
    CHECK(std::abs(back.z() - z) < 1e-12);

    CameraModel moved = cam;
    moved.rotation = testing::random_rotation(rng);
    moved.translation = Eigen::Vector3d::Random() * 3;
    CHECK(project_pixel(moved, u, v, z) == Eigen::Vector3d(moved.rotation * p + moved.translation));
  }
}

TEST_CASE("camera validation") {
  CameraModel cam;
  CHECK_NOTHROW(cam.validate());
  cam.fx = 0;
  CHECK(code_of([&] { cam.validate(); }) == ErrorCode::kConfiguration);
  cam.fx = 1;
  cam.rotation(0, 0) = -1;  // reflection
  CHECK(code_of([&] { cam.validate(); }) == ErrorCode::kConfiguration);
}

TEST_CASE("depth grid marks invalid values") {
  const auto g = DepthGrid::from_values(2, 2, {1.0F, std::numeric_limits<float>::quiet_NaN(), -1.0F, 0.0F});
  CHECK(g.is_valid(0, 0));
  CHECK_FALSE(g.is_valid(1, 0));
  CHECK_FALSE(g.is_valid(0, 1));
  CHECK_FALSE(g.is_valid(1, 1));
  CHECK(code_of([] { DepthGrid::from_values(2, 2, {1.0F}); }) == ErrorCode::kShape);
}

TEST_CASE("project_sketch over a constant plane") {
  CameraModel cam;
  cam.fx = cam.fy = 10;
  const auto depth = DepthGrid::from_values(8, 8, std::vector<float>(64, 1.0F));
  const auto set = project_sketch(cam, depth, polygon({{1, 1}, {5, 1}, {5, 5}, {1, 5}}, RegionLabel::kPermissible));
  CHECK(set.size() == 25);
  CHECK(set.label == RegionLabel::kPermissible);
  for (const auto& p : set.points) CHECK(p.z() == doctest::Approx(1.0));
}

TEST_CASE("project_sketch keeps only valid pixels") {
  CameraModel cam;
  std::vector<float> values(64, 2.0F);
  for (int v = 0; v < 8; ++v) {
    for (int u = 4; u < 8; ++u) values[static_cast<std::size_t>(v * 8 + u)] = std::numeric_limits<float>::quiet_NaN();
  }
  const auto depth = DepthGrid::from_values(8, 8, values);
  CHECK(project_sketch(cam, depth, polygon({{0, 0}, {7, 0}, {7, 7}, {0, 7}})).size() == 32);
  CHECK(code_of([&] { project_sketch(cam, depth, polygon({{4, 0}, {7, 0}, {7, 7}, {4, 7}})); }) ==
        ErrorCode::kEmptyPointSet);
}

TEST_CASE("full-image sketch over two tables gives two clusters") {
  CameraModel cam;
  cam.fx = cam.fy = 100;
  cam.cx = 40;
  cam.cy = 20;
  std::vector<float> values(80 * 40, std::numeric_limits<float>::quiet_NaN());
  for (int v = 10; v < 30; ++v) {
    for (int u = 5; u < 25; ++u) values[static_cast<std::size_t>(v * 80 + u)] = 2.0F;
    for (int u = 55; u < 75; ++u) values[static_cast<std::size_t>(v * 80 + u)] = 2.5F;
  }
  const auto set = project_sketch(cam, DepthGrid::from_values(80, 40, values),
                                  polygon({{0, 0}, {79, 0}, {79, 39}, {0, 39}}));
  std::vector<Eigen::Vector2d> xz;
  for (const auto& p : set.points) xz.emplace_back(p.x(), p.z());
  const auto labels = testing::single_linkage(xz, 0.05);
  CHECK(*std::max_element(labels.begin(), labels.end()) == 1);
}

TEST_CASE("depth file round trip") {
  const auto path = std::filesystem::temp_directory_path() / "sdi_test_depth.sdid";
  const auto g = DepthGrid::from_values(3, 2, {1.0F, 2.0F, std::numeric_limits<float>::quiet_NaN(), 4.0F, 5.0F, 6.0F});
  write_depth_file(path, g);
  const auto back = read_depth_file(path);
  CHECK(back.width == 3);
  CHECK(back.height == 2);
  CHECK(back.valid == g.valid);
  CHECK(back.at(2, 1) == 6.0F);
  const auto bytes = io::read_file(path);
  CHECK(bytes.size() == 16 + 6 * 4);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "SDID");
  std::filesystem::remove(path);

  auto bad = encode_depth(g);
  bad[0] = 'X';
  CHECK(code_of([&] { decode_depth(bad); }) == ErrorCode::kParse);
  auto short_bytes = encode_depth(g);
  short_bytes.resize(20);
  CHECK(code_of([&] { decode_depth(short_bytes); }) == ErrorCode::kParse);
}

TEST_CASE("labels") {
  CHECK(parse_label("roi") == RegionLabel::kRegionOfInterest);
  CHECK(label_name(RegionLabel::kPermissible) == "permissible");
  CHECK(code_of([] { parse_label("floor"); }) == ErrorCode::kParse);
}

}
