#pragma once

#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sdi/energy_field.hpp"
#include "sdi/error.hpp"
#include "sdi/kinematics.hpp"
#include "sdi/random.hpp"

namespace sdi::solver {

using kinematics::BaseConfig;
using kinematics::KinematicChain;

enum class Resampling { kFresh, kFixed };

struct SolverConfig {
  double step = 0.005;             // alpha
  int samples = 1024;              // N joint draws per step
  int iterations = 40;             // T_MBPP
  int project_iterations = 20;     // T_Project
  double epsilon = 1e-3;           // projection tolerance, pre-sigmoid units
  double tau = 0.95;               // feasibility threshold on sigma(G)
  double z_min = 0.15;
  double z_max = 0.42;
  double omega_min = 0.0;
  double omega_max = 2.0 * std::numbers::pi;
  Resampling resampling = Resampling::kFresh;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TraceEntry {
  int iteration = 0;
  BaseConfig base;              // after clamping and projection
  double expected_energy = 0.0; // estimate at the pre-step configuration
  double gradient_norm = 0.0;
  bool projected = false;
  int projection_iterations = 0;
  bool reverted = false;        // projection failed; x, y kept from before the step
};

struct SolveTrace {
  BaseConfig initial;
  std::vector<TraceEntry> entries;
};

/// Whitespace-delimited table, one row per iteration:
/// iteration x y z omega energy grad_norm projected projection_iters reverted
std::string trace_table(const SolveTrace& trace);

/// Raised when the expected energy turns non-finite; carries the trace so far.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& message, SolveTrace trace)
      : Error(ErrorCode::kDivergence, message), trace_(std::move(trace)) {}
  const SolveTrace& trace() const { return trace_; }

 private:
  SolveTrace trace_;
};

// ---------------------------------------------------------------------------
// Objective

struct EnergyEstimate {
  double value = 0.0;
  Eigen::Vector4d gradient = Eigen::Vector4d::Zero();  // d/d(x, y, z, omega)
};

/// Mean energy of the end-effector positions reached from `base` by the
/// given arm-frame positions, with its gradient when requested. `fast`
/// selects the field's reduced-precision path.
EnergyEstimate estimate_energy(const EnergyField& roi, const Eigen::Matrix3Xd& local,
                               const BaseConfig& base, bool with_gradient, bool fast = false);

/// E-hat(C) over joint vectors (one per column); kConfiguration when empty,
/// kLimit when a sample leaves its limits.
double expected_energy(const EnergyField& roi, const KinematicChain& chain, const BaseConfig& base,
                       const Eigen::MatrixXd& joints);
Eigen::Vector4d expected_energy_gradient(const EnergyField& roi, const KinematicChain& chain,
                                         const BaseConfig& base, const Eigen::MatrixXd& joints);

// ---------------------------------------------------------------------------
// Projection

struct Projection {
  Eigen::Vector2d point;
  int iterations = 0;
  bool converged = false;
};

/// Newton iteration on G(p) = logit(tau) along the gradient direction.
/// Throws kStationaryPoint when the gradient norm drops below 1e-12.
Projection project_to_boundary(const EnergyField& constraint, const Eigen::Vector2d& p, double tau,
                               int max_iterations, double epsilon);

/// sigma(G(x, y)) >= tau.
bool feasible_xy(const EnergyField& constraint, const Eigen::Vector2d& p, double tau);

// ---------------------------------------------------------------------------
// Optimiser

struct SolveResult {
  BaseConfig base;
  SolveTrace trace;
};

/// Gradient ascent on E-hat with z and omega clamps and, when a constraint
/// is given, projection of infeasible (x, y) back onto the tau contour.
SolveResult solve_mbpp(const EnergyField& roi, const EnergyField* constraint,
                       const KinematicChain& chain, const SolverConfig& config,
                       const BaseConfig& initial);

/// Axis-aligned x, y region that initial placements are drawn from.
struct PlacementRegion {
  Eigen::Vector2d lo;
  Eigen::Vector2d hi;
};

/// Bounding box of the permissible points when constrained; otherwise the
/// ROI x, y bounding box grown by `reach` on every side.
PlacementRegion placement_region(const Eigen::MatrixXd& roi_points,
                                 const Eigen::MatrixXd* permissible_xy, double reach);

/// Uniform draw in the region (rejected until feasible when constrained),
/// z and omega uniform in their boxes. kInfeasible after 1000 rejections.
BaseConfig sample_feasible(const EnergyField* constraint, const PlacementRegion& region,
                           const SolverConfig& config, Rng& rng);

struct MultistartResult {
  BaseConfig best;
  int best_index = 0;
  std::vector<SolveResult> runs;
  std::vector<double> scores;  // E-hat of each final on the shared evaluation set
};

/// Configuration used for restart r (its seed is derived from config.seed).
SolverConfig restart_config(const SolverConfig& config, int restart);

/// Initial placement of restart r.
BaseConfig restart_initial(const EnergyField* constraint, const PlacementRegion& region,
                           const SolverConfig& config, int restart);

inline constexpr int kSharedEvaluationSamples = 8192;

MultistartResult solve_multistart(const EnergyField& roi, const EnergyField* constraint,
                                  const KinematicChain& chain, const SolverConfig& config,
                                  const PlacementRegion& region, int restarts);

}  // namespace sdi::solver
