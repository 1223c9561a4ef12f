#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "sdi/datasets.hpp"
#include "sdi/error.hpp"
#include "sdi/eval.hpp"
#include "sdi/solver.hpp"
#include "support.hpp"

using namespace sdi;
using namespace sdi::solver;

namespace {

const KinematicChain& arm() {
  static const auto chain = kinematics::load_chain(kinematics::bundled_arm_path());
  return chain;
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

class NanField final : public EnergyField {
 public:
  int input_dim() const override { return 3; }
  void evaluate(const Eigen::Ref<const Eigen::MatrixXd>& points, Eigen::VectorXd& values,
                Eigen::MatrixXd* gradients) const override {
    values = Eigen::VectorXd::Constant(points.cols(), std::numeric_limits<double>::quiet_NaN());
    if (gradients != nullptr) *gradients = Eigen::MatrixXd::Zero(3, points.cols());
  }
};

SolverConfig small_config() {
  SolverConfig c;
  c.samples = 64;
  c.iterations = 10;
  c.seed = 5;
  return c;
}

}  // namespace

TEST_SUITE("solver") {

TEST_CASE("defaults") {
  const SolverConfig c;
  CHECK(c.samples == 1024);
  CHECK(c.iterations == 40);
  CHECK(c.project_iterations == 20);
  CHECK(c.step == 0.005);
  CHECK(c.tau == 0.95);
  CHECK(c.z_min == 0.15);
  CHECK(c.z_max == 0.42);
  CHECK(c.omega_min == 0.0);
  CHECK(c.omega_max == 2.0 * std::numbers::pi);
  CHECK(c.resampling == Resampling::kFresh);
}

TEST_CASE("constant field") {
  const testing::AffineField flat(Eigen::Vector3d::Zero(), -1.25);
  const Eigen::MatrixXd q = kinematics::sample_joints(arm(), 100, 1);
  const BaseConfig base{0.3, -0.7, 0.2, 1.0};
  CHECK(expected_energy(flat, arm(), base, q) == -1.25);
  CHECK(expected_energy_gradient(flat, arm(), base, q).norm() == 0.0);
}

TEST_CASE("single sample is the pointwise energy") {
  const testing::QuadraticField f(Eigen::Vector3d(0.5, 0.1, 0.4), 2.0, 3.0);
  const Eigen::MatrixXd q = kinematics::sample_joints(arm(), 1, 2);
  const BaseConfig base{0.1, 0.2, 0.3, 0.4};
  CHECK(expected_energy(f, arm(), base, q) == f.energy(kinematics::forward(arm(), q.col(0), base)));
  CHECK(code_of([&] { expected_energy(f, arm(), base, Eigen::MatrixXd(6, 0)); }) == ErrorCode::kConfiguration);
}

TEST_CASE("linear field gradient equals its slope") {
  const Eigen::Vector3d a(0.7, -1.3, 2.1);
  const testing::AffineField lin(a, 0.4);
  for (int i = 0; i < 5; ++i) {
    const Eigen::MatrixXd q = kinematics::sample_joints(arm(), 50, 10 + i);
    const Eigen::Vector4d g = expected_energy_gradient(lin, arm(), {0.1 * i, 0.2, 0.3, 0.9 * i}, q);
    CHECK((g.head<3>() - a).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("gradient matches central differences on shared samples") {
  const testing::QuadraticField f(Eigen::Vector3d(0.5, 0.1, 0.4), 2.0, 3.0);
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    const Eigen::MatrixXd q = kinematics::sample_joints(arm(), 64, 30 + i);
    const BaseConfig base{uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, 0.15, 0.42), uniform(rng, 0, 6)};
    const Eigen::Vector4d g = expected_energy_gradient(f, arm(), base, q);
    Eigen::Vector4d fd;
    for (int k = 0; k < 4; ++k) {
      Eigen::Vector4d a = base.vector(), b = base.vector();
      a(k) += 1e-5;
      b(k) -= 1e-5;
      fd(k) = (expected_energy(f, arm(), BaseConfig::from_vector(a), q) -
               expected_energy(f, arm(), BaseConfig::from_vector(b), q)) /
              2e-5;
    }
    CHECK((g - fd).norm() <= 1e-4 * fd.norm());
  }
}

TEST_CASE("a trained ROI map prefers nearby bases") {
  const auto scene = datasets::generate_scene("drawer");
  sim::TrainConfig train;
  train.epochs = 20;
  const auto pts = geometry::to_matrix(datasets::roi_points(scene));
  const auto model = sim::nce_fit(eval::subsample(pts, 2000, 0), train);
  const Eigen::Vector3d c = pts.rowwise().mean();
  const Eigen::MatrixXd q = kinematics::sample_joints(arm(), 512, 4);
  const double near = expected_energy(model, arm(), {c.x(), c.y(), 0.3, 0.0}, q);
  const double far = expected_energy(model, arm(), {c.x() + 5.0, c.y(), 0.3, 0.0}, q);
  CHECK(near > far);
}

TEST_CASE("projection") {
  SUBCASE("already on the contour") {
    const testing::AffineField g(Eigen::Vector2d(1.0, 0.0), std::log(19.0));
    const auto p = project_to_boundary(g, {0.0, 3.0}, 0.95, 20, 1e-3);
    CHECK(p.iterations == 0);
    CHECK(p.converged);
    CHECK(p.point == Eigen::Vector2d(0.0, 3.0));
  }
  SUBCASE("affine field converges in one step") {
    const testing::AffineField g(Eigen::Vector2d(2.0, -1.0), 0.5);
    const auto p = project_to_boundary(g, {-3.0, 4.0}, 0.95, 20, 1e-3);
    CHECK(p.iterations == 1);
    CHECK(p.converged);
    CHECK(std::abs(g.energy(p.point) - std::log(19.0)) < 1e-12);
    const auto again = project_to_boundary(g, p.point, 0.95, 20, 1e-3);
    CHECK((again.point - p.point).norm() < 1e-3);
  }
  SUBCASE("flat field is a stationary point") {
    const testing::AffineField g(Eigen::Vector2d::Zero(), 0.0);
    CHECK(code_of([&] { project_to_boundary(g, {1.0, 1.0}, 0.95, 20, 1e-3); }) == ErrorCode::kStationaryPoint);
  }
  SUBCASE("iteration budget exhausted") {
    const testing::QuadraticField g(Eigen::Vector2d::Zero(), 5.0, 1.0);
    const auto p = project_to_boundary(g, {6.0, 0.0}, 0.95, 1, 1e-9);
    CHECK_FALSE(p.converged);
    CHECK(p.iterations == 1);
  }
  SUBCASE("constraint must be planar") {
    const testing::AffineField g(Eigen::Vector3d::Ones(), 0.0);
    CHECK(code_of([&] { project_to_boundary(g, {0.0, 0.0}, 0.95, 20, 1e-3); }) == ErrorCode::kShape);
  }
}

TEST_CASE("fixed yaw box pins omega") {
  const testing::QuadraticField roi(Eigen::Vector3d(1.0, 0.5, 0.4), 0.0, 2.0);
  SolverConfig c = small_config();
  c.omega_min = c.omega_max = 0.0;
  const auto r = solve_mbpp(roi, nullptr, arm(), c, {0.0, 0.0, 0.3, 1.0});
  REQUIRE(r.trace.entries.size() == 10);
  for (const auto& e : r.trace.entries) CHECK(e.base.omega == 0.0);
}

TEST_CASE("trace entries respect the boxes and the constraint") {
  const testing::QuadraticField roi(Eigen::Vector3d(2.0, 0.0, 0.4), 0.0, 2.0);
  const testing::AffineField half_plane(Eigen::Vector2d(-4.0, 0.0), 6.0);  // feasible for x <= ~0.76
  SolverConfig c = small_config();
  c.iterations = 40;
  c.step = 0.05;
  const auto r = solve_mbpp(roi, &half_plane, arm(), c, {0.0, 0.0, 0.3, 1.0});
  bool projected = false;
  for (const auto& e : r.trace.entries) {
    CHECK(e.base.z >= c.z_min);
    CHECK(e.base.z <= c.z_max);
    CHECK(e.base.omega >= c.omega_min);
    CHECK(e.base.omega <= c.omega_max);
    CHECK(half_plane.energy(Eigen::Vector2d(e.base.x, e.base.y)) >= logit(c.tau) - c.epsilon);
    projected = projected || e.projected;
  }
  CHECK(projected);
}

TEST_CASE("fixed samples with a small step never lower the estimate") {
  const testing::QuadraticField roi(Eigen::Vector3d(1.0, 0.5, 0.4), 0.0, 2.0);
  SolverConfig c = small_config();
  c.resampling = Resampling::kFixed;
  c.step = 5e-4;
  c.iterations = 40;
  const auto r = solve_mbpp(roi, nullptr, arm(), c, {-0.5, 0.0, 0.3, 1.0});
  for (std::size_t i = 1; i < r.trace.entries.size(); ++i) {
    CHECK(r.trace.entries[i].expected_energy >= r.trace.entries[i - 1].expected_energy);
  }
}

TEST_CASE("seeded determinism and the single-restart wrapper") {
  const testing::QuadraticField roi(Eigen::Vector3d(1.0, 0.5, 0.4), 0.0, 2.0);
  const SolverConfig c = small_config();
  const PlacementRegion region{Eigen::Vector2d(-1, -1), Eigen::Vector2d(1, 1)};
  const auto a = solve_multistart(roi, nullptr, arm(), c, region, 1);
  const auto b = solve_multistart(roi, nullptr, arm(), c, region, 1);
  CHECK(a.best.vector() == b.best.vector());
  const auto single = solve_mbpp(roi, nullptr, arm(), restart_config(c, 0), restart_initial(nullptr, region, c, 0));
  CHECK(a.best.vector() == single.base.vector());
  CHECK(trace_table(a.runs[0].trace) == trace_table(single.trace));
  const auto four = solve_multistart(roi, nullptr, arm(), c, region, 4);
  CHECK(four.runs.size() == 4);
  CHECK(four.scores[static_cast<std::size_t>(four.best_index)] == *std::max_element(four.scores.begin(), four.scores.end()));
  CHECK(code_of([&] { solve_multistart(roi, nullptr, arm(), c, region, 0); }) == ErrorCode::kConfiguration);
}

TEST_CASE("trace table") {
  SolveTrace t;
  TraceEntry e;
  e.iteration = 3;
  e.base = {0.5, -0.25, 0.3, 1.5};
  e.expected_energy = -2.0;
  e.gradient_norm = 0.125;
  e.projected = true;
  e.projection_iterations = 2;
  t.entries.push_back(e);
  CHECK(trace_table(t) ==
        "iteration x y z omega energy grad_norm projected projection_iters reverted\n"
        "3 0.5 -0.25 0.3 1.5 -2 0.125 1 2 0\n");
}

TEST_CASE("no feasible start") {
  const testing::AffineField nowhere(Eigen::Vector2d::Zero(), -20.0);
  Rng rng(1);
  const PlacementRegion region{Eigen::Vector2d(-1, -1), Eigen::Vector2d(1, 1)};
  CHECK(code_of([&] { sample_feasible(&nowhere, region, SolverConfig{}, rng); }) == ErrorCode::kInfeasible);
}

TEST_CASE("non-finite energy raises divergence with the trace") {
  const NanField roi;
  try {
    solve_mbpp(roi, nullptr, arm(), small_config(), {0, 0, 0.3, 0});
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.code() == ErrorCode::kDivergence);
    CHECK(e.trace().entries.empty());
  }
}

}

TEST_SUITE("solver-coverage") {

TEST_CASE("tables-a placement covers both tables") {
  const auto scene = datasets::generate_scene("tables-a");
  const eval::BenchConfig bench;
  const auto models = eval::fit_scene(scene, bench.train, bench.fit);
  const Eigen::Matrix3Xd test = eval::subsample(models.roi_points, bench.test_points, 0);
  const eval::CoverageOracle oracle(arm(), bench.fk_samples, bench.tolerance, derive_seed(0, 0x0C));
  const SolverConfig c = eval::with_scene_limits({}, scene.limits);
  const PlacementRegion region = placement_region(models.roi_points, &models.permissible_xy, oracle.reach());
  const auto result = solve_multistart(models.roi, &*models.constraint, arm(), c, region, 4);
  const double ours = oracle.coverage(result.best, test);
  BaseConfig best = result.best;
  const int grid = testing::grid_optimum(oracle, test, region.lo, region.hi, scene.limits, 0, best, [&](double x, double y) {
    return feasible_xy(*models.constraint, {x, y}, c.tau);
  });
  const double optimum = static_cast<double>(grid) / static_cast<double>(test.cols());
  CAPTURE(ours);
  CAPTURE(optimum);
  CHECK(ours >= 0.9 * optimum);
}

}
