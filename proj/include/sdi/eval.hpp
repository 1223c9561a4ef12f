#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sdi/datasets.hpp"
#include "sdi/energy_field.hpp"
#include "sdi/kinematics.hpp"
#include "sdi/sim.hpp"
#include "sdi/solver.hpp"

namespace sdi::eval {

using kinematics::BaseConfig;
using kinematics::KinematicChain;

/// Sampling-based reachability: a point counts as reachable from a base if
/// one of M seeded end-effector samples lies within the tolerance. Samples
/// live in the arm frame, so a base change only transforms the query points.
class CoverageOracle {
 public:
  CoverageOracle(const KinematicChain& chain, Eigen::Index samples = 100000,
                 double tolerance = 0.02, std::uint64_t seed = 0);

  bool reachable_local(const Eigen::Vector3d& local) const;
  /// Reachable fraction of the points (one per column); 0 for an empty set.
  double coverage(const BaseConfig& base, const Eigen::Matrix3Xd& points) const;
  std::vector<std::uint8_t> reachable_mask(const BaseConfig& base,
                                           const Eigen::Matrix3Xd& points) const;

  double reach() const { return reach_; }
  double tolerance() const { return tolerance_; }
  const Eigen::Matrix3Xd& samples() const { return samples_; }

 private:
  Eigen::Matrix3Xd samples_;  // sorted by cell
  double tolerance_;
  double reach_ = 0.0;
  Eigen::Vector3d origin_;
  Eigen::Vector3i dims_;
  std::vector<std::int32_t> cell_start_;  // CSR offsets, size cells + 1
};

double coverage(const KinematicChain& chain, const BaseConfig& base, const Eigen::Matrix3Xd& roi,
                Eigen::Index samples = 100000, double tolerance = 0.02, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Inverse kinematics

struct IkOptions {
  int max_iterations = 100;
  double damping = 0.05;
  double tolerance = 1e-3;  // success threshold on position error (m)
  int restarts = 3;         // extra seeded starts after the midpoint start
  std::uint64_t seed = 0;
};

/// Damped least squares on position error with joint clamping after every
/// step. Returns nullopt unless the error drops below the tolerance.
std::optional<Eigen::VectorXd> ik_solve(const KinematicChain& chain, const Eigen::Vector3d& target,
                                        const BaseConfig& base, const IkOptions& options = {});

// ---------------------------------------------------------------------------
// Baselines

struct IkBaselineConfig {
  int roi_samples = 256;
  int candidates = 200;  // feasible base draws per ROI sample
  IkOptions ik;
  std::uint64_t seed = 0;
};

/// Draws ROI points by rejection on sigma(E) over `roi_box`; for each takes
/// the first of `candidates` feasible bases from which IK succeeds; returns
/// the mean placement after clamping and projection.
BaseConfig ik_baseline(const EnergyField& roi, const sim::SamplingBox& roi_box,
                       const EnergyField* constraint, const solver::PlacementRegion& region,
                       const KinematicChain& chain, const solver::SolverConfig& limits,
                       const IkBaselineConfig& config);

/// One feasible placement drawn uniformly.
BaseConfig random_baseline(const EnergyField* constraint, const solver::PlacementRegion& region,
                           const solver::SolverConfig& limits, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Benchmark

struct SceneFitOptions {
  /// Negative-box padding for the constraint map. Area regions that fill
  /// their own bounding box cap sigma(G) at A_box / (A_box + A_region), so a
  /// wide box is needed for the tau contour to exist.
  double constraint_padding = 3.0;
  int max_points = 4000;  // seeded subsample per map
};

struct BenchConfig {
  sim::TrainConfig train;
  SceneFitOptions fit;
  solver::SolverConfig solver;
  IkBaselineConfig ik;
  int restarts = 1;
  int test_points = 1000;
  Eigen::Index fk_samples = 100000;
  double tolerance = 0.02;
  int random_draws = 16;
  std::uint64_t seed = 0;
};

struct MethodResult {
  std::string method;
  double coverage = 0.0;
  double runtime = 0.0;  // seconds
  BaseConfig placement;
};

struct ReachabilityReport {
  std::string scene;
  std::vector<MethodResult> methods;  // ours, ik, random
  int test_points = 0;
  Eigen::Index fk_samples = 0;
  double tolerance = 0.0;
  std::uint64_t seed = 0;

  const MethodResult& method(const std::string& name) const;
};

/// Trained maps and derived data for one scene.
struct SceneModels {
  sim::EnergyModel roi;
  std::optional<sim::EnergyModel> constraint;
  Eigen::MatrixXd roi_points;         // 3 x n
  Eigen::MatrixXd permissible_xy;     // 2 x m, empty when unconstrained
  sim::SamplingBox roi_box;
};

SceneModels fit_scene(const datasets::SceneSpec& scene, const sim::TrainConfig& train,
                      const SceneFitOptions& options = {});

/// Seeded subsample (without replacement) of at most `count` columns.
Eigen::Matrix3Xd subsample(const Eigen::MatrixXd& points, int count, std::uint64_t seed);

/// Solver limits taken from the scene.
solver::SolverConfig with_scene_limits(solver::SolverConfig config, const datasets::Limits& limits);

ReachabilityReport run_benchmark(const datasets::SceneSpec& scene, const KinematicChain& chain,
                                 const BenchConfig& config);
ReachabilityReport run_benchmark(const datasets::SceneSpec& scene, const SceneModels& models,
                                 const KinematicChain& chain, const BenchConfig& config);

/// Delimited text: "scene method coverage_pct runtime_s x y z omega".
std::string report_table(const std::vector<ReachabilityReport>& reports, bool with_runtime = true);

/// sigma(E) on a regular x, y grid (2D maps) or an x, y slice at height z
/// (3D maps). Header: "# grid nx ny x0 y0 dx dy", then ny rows of nx values.
std::string probability_grid(const EnergyField& model, const Eigen::Vector2d& lo,
                             const Eigen::Vector2d& hi, int nx, int ny, double z = 0.0);

}  // namespace sdi::eval
