#include <doctest.h>

#include <cmath>

#include "sdi/error.hpp"
#include "sdi/eval.hpp"
#include "support.hpp"

using namespace sdi;
using namespace sdi::eval;

namespace {

const KinematicChain& arm() {
  static const auto chain = kinematics::load_chain(kinematics::bundled_arm_path());
  return chain;
}

const CoverageOracle& oracle() {
  static const CoverageOracle o(arm(), 100000, 0.02, 0);
  return o;
}

/// G(x, y) = peak - k (y - y0)^2: a band around y = y0.
class StripField final : public EnergyField {
 public:
  StripField(double y0, double peak, double k) : y0_(y0), peak_(peak), k_(k) {}
  int input_dim() const override { return 2; }
  void evaluate(const Eigen::Ref<const Eigen::MatrixXd>& points, Eigen::VectorXd& values,
                Eigen::MatrixXd* gradients) const override {
    check_dim(points.rows());
    const Eigen::ArrayXd dy = points.row(1).transpose().array() - y0_;
    values = (peak_ - k_ * dy.square()).matrix();
    if (gradients != nullptr) {
      gradients->setZero(2, points.cols());
      gradients->row(1) = (-2.0 * k_ * dy).matrix().transpose();
    }
  }

 private:
  double y0_, peak_, k_;
};

Eigen::Matrix3Xd drawer_points() {
  return subsample(geometry::to_matrix(datasets::roi_points(datasets::generate_scene("drawer"))), 500, 0);
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("coverage of unreachable points") {
  const Eigen::Matrix3Xd far = Eigen::Vector3d(10.0, 0.0, 0.5).replicate(1, 5);
  CHECK(oracle().coverage({0, 0, 0.3, 0}, far) == 0.0);
  CHECK(oracle().coverage({0, 0, 0.3, 0}, Eigen::Matrix3Xd(3, 0)) == 0.0);
}

TEST_CASE("coverage grows with the tolerance") {
  const Eigen::Matrix3Xd pts = drawer_points();
  const Eigen::Vector3d c = pts.rowwise().mean();
  const BaseConfig base{c.x() - 0.45, c.y(), 0.3, 0.0};
  double previous = 0.0;
  for (double tol : {0.005, 0.01, 0.02, 0.04}) {
    const double v = coverage(arm(), base, pts, 50000, tol, 3);
    CHECK(v >= previous);
    previous = v;
  }
  const auto mask = oracle().reachable_mask(base, pts);
  const double from_mask = static_cast<double>(std::count(mask.begin(), mask.end(), 1)) / pts.cols();
  CHECK(from_mask == oracle().coverage(base, pts));
}

TEST_CASE("damped least squares IK") {
  const BaseConfig base{0.3, 0.1, 0.25, 1.2};
  for (int i = 0; i < 10; ++i) {
    const Eigen::VectorXd q0 = kinematics::sample_joints(arm(), 1, 40 + i).col(0);
    const Eigen::Vector3d target = kinematics::forward(arm(), q0, base);
    IkOptions options;
    options.restarts = 10;
    const auto q = ik_solve(arm(), target, base, options);
    REQUIRE(q.has_value());
    CHECK((kinematics::forward(arm(), *q, base) - target).norm() < 1e-3);
    for (int k = 0; k < arm().dof(); ++k) {
      CHECK((*q)(k) >= arm().joints[k].lower);
      CHECK((*q)(k) <= arm().joints[k].upper);
    }
  }
  CHECK_FALSE(ik_solve(arm(), Eigen::Vector3d(10 * oracle().reach(), 0, 0), base).has_value());
}

TEST_CASE("IK baseline lands in the only feasible strip") {
  const testing::QuadraticField roi(Eigen::Vector3d(0.0, 0.0, 0.5), 6.0, 400.0);
  const sim::SamplingBox roi_box{Eigen::Vector3d(-0.2, -0.2, 0.3), Eigen::Vector3d(0.2, 0.2, 0.7)};
  const StripField strip(0.4, 6.0, 100.0);
  const solver::PlacementRegion region{Eigen::Vector2d(-0.5, 0.2), Eigen::Vector2d(0.5, 0.6)};
  const solver::SolverConfig limits;
  IkBaselineConfig config;
  config.roi_samples = 16;
  config.candidates = 50;
  config.seed = 3;
  const BaseConfig a = ik_baseline(roi, roi_box, &strip, region, arm(), limits, config);
  const BaseConfig b = ik_baseline(roi, roi_box, &strip, region, arm(), limits, config);
  CHECK(a.vector() == b.vector());
  CHECK(strip.energy(Eigen::Vector2d(a.x, a.y)) >= logit(limits.tau) - limits.epsilon);
  CHECK(a.z >= limits.z_min);
  CHECK(a.z <= limits.z_max);

  const testing::AffineField nowhere(Eigen::Vector3d::Zero(), -40.0);
  CHECK_THROWS_AS(ik_baseline(nowhere, roi_box, &strip, region, arm(), limits, config), Error);
}

TEST_CASE("random baseline") {
  const testing::AffineField half_plane(Eigen::Vector2d(-4.0, 0.0), 6.0);
  const double x_max = (6.0 - std::log(19.0)) / 4.0;
  const solver::PlacementRegion region{Eigen::Vector2d(-1, -1), Eigen::Vector2d(1, 1)};
  const solver::SolverConfig limits;
  CHECK(random_baseline(&half_plane, region, limits, 9).vector() ==
        random_baseline(&half_plane, region, limits, 9).vector());

  constexpr int kDraws = 10000;
  int counts[4][4] = {};
  for (int i = 0; i < kDraws; ++i) {
    const BaseConfig c = random_baseline(&half_plane, region, limits, static_cast<std::uint64_t>(i));
    REQUIRE(solver::feasible_xy(half_plane, {c.x, c.y}, limits.tau));
    CHECK(c.z >= limits.z_min);
    CHECK(c.z <= limits.z_max);
    const int ix = std::min(3, static_cast<int>((c.x + 1.0) / (x_max + 1.0) * 4));
    const int iy = std::min(3, static_cast<int>((c.y + 1.0) / 2.0 * 4));
    ++counts[ix][iy];
  }
  double chi2 = 0.0;
  const double expected = kDraws / 16.0;
  for (const auto& row : counts) {
    for (int n : row) chi2 += (n - expected) * (n - expected) / expected;
  }
  CHECK(chi2 < 30.578);  // chi-square 0.99 quantile, 15 degrees of freedom
}

TEST_CASE("report and grid formats") {
  ReachabilityReport r;
  r.scene = "drawer";
  r.methods = {{"ours", 0.5, 0.25, {1, 2, 0.3, 0.5}}, {"random", 0.0, 0.0, {0, 0, 0.2, 0}}};
  CHECK(report_table({r}) ==
        "scene method coverage_pct runtime_s x y z omega\n"
        "drawer ours 50 0.25 1 2 0.3 0.5\n"
        "drawer random 0 0 0 0 0.2 0\n");
  CHECK(report_table({r}, false) ==
        "scene method coverage_pct x y z omega\n"
        "drawer ours 50 1 2 0.3 0.5\n"
        "drawer random 0 0 0 0.2 0\n");
  CHECK(r.method("ours").coverage == 0.5);

  const testing::AffineField flat(Eigen::Vector2d::Zero(), 0.0);
  CHECK(probability_grid(flat, {0, 0}, {1, 2}, 2, 3) == "# grid 2 3 0 0 1 1\n0.5 0.5\n0.5 0.5\n0.5 0.5\n");
}

}

TEST_SUITE("coverage-convergence") {

TEST_CASE("the midpoint configuration is reachable at 1 cm") {
  Eigen::VectorXd mid(arm().dof());
  for (int k = 0; k < arm().dof(); ++k) mid(k) = 0.5 * (arm().joints[k].lower + arm().joints[k].upper);
  const BaseConfig base{0.2, -0.1, 0.3, 0.7};
  const Eigen::Matrix3Xd target = kinematics::forward(arm(), mid, base);
  CHECK(coverage(arm(), base, target, 100000, 0.01, 0) == 1.0);
}

TEST_CASE("doubling the sample count barely moves coverage") {
  const CoverageOracle half(arm(), 50000, 0.02, 0);
  for (const auto& name : datasets::benchmark_scene_names()) {
    const Eigen::Matrix3Xd pts =
        subsample(geometry::to_matrix(datasets::roi_points(datasets::generate_scene(name))), 1000, 0);
    const Eigen::Vector3d c = pts.rowwise().mean();
    for (double dx : {-0.2, -0.4, -0.6}) {
      for (double omega : {0.0, 3.14}) {
        const BaseConfig base{c.x() + dx, c.y(), 0.3, omega};
        CAPTURE(name);
        CAPTURE(dx);
        CAPTURE(omega);
        CHECK(std::abs(half.coverage(base, pts) - oracle().coverage(base, pts)) < 0.02);
      }
    }
  }
}

}
