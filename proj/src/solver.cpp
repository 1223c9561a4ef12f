#include "sdi/solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace sdi::solver {

void SolverConfig::validate() const {
  if (!(step > 0.0)) throw Error(ErrorCode::kConfiguration, "step size must be > 0");
  if (samples < 1) throw Error(ErrorCode::kConfiguration, "need at least one joint sample");
  if (iterations < 0 || project_iterations < 0) {
    throw Error(ErrorCode::kConfiguration, "iteration counts must be >= 0");
  }
  if (!(tau > 0.0 && tau < 1.0)) throw Error(ErrorCode::kConfiguration, "tau must lie in (0, 1)");
  if (!(epsilon > 0.0)) throw Error(ErrorCode::kConfiguration, "epsilon must be > 0");
  if (!(z_min <= z_max) || !(omega_min <= omega_max)) {
    throw Error(ErrorCode::kConfiguration, "limits need min <= max");
  }
}

std::string trace_table(const SolveTrace& trace) {
  std::string out = "iteration x y z omega energy grad_norm projected projection_iters reverted\n";
  char line[256];
  for (const auto& e : trace.entries) {
    std::snprintf(line, sizeof line, "%d %.6g %.6g %.6g %.6g %.6g %.6g %d %d %d\n", e.iteration,
                  e.base.x, e.base.y, e.base.z, e.base.omega, e.expected_energy, e.gradient_norm,
                  e.projected ? 1 : 0, e.projection_iterations, e.reverted ? 1 : 0);
    out += line;
  }
  return out;
}

// --- Objective -------------------------------------------------------------

EnergyEstimate estimate_energy(const EnergyField& roi, const Eigen::Matrix3Xd& local,
                               const BaseConfig& base, bool with_gradient, bool fast) {
  if (local.cols() == 0) throw Error(ErrorCode::kConfiguration, "no joint samples");
  const Eigen::Matrix3Xd world = kinematics::to_world(local, base);
  Eigen::VectorXd values;
  Eigen::MatrixXd grads;
  if (fast) {
    roi.evaluate_fast(world, values, with_gradient ? &grads : nullptr);
  } else {
    roi.evaluate(world, values, with_gradient ? &grads : nullptr);
  }

  EnergyEstimate out;
  const double n = static_cast<double>(local.cols());
  out.value = values.sum() / n;
  if (with_gradient) {
    const double c = std::cos(base.omega);
    const double s = std::sin(base.omega);
    // d world / d omega = dRz/domega * p_local
    Eigen::Matrix3Xd dw(3, local.cols());
    dw.row(0) = -s * local.row(0) - c * local.row(1);
    dw.row(1) = c * local.row(0) - s * local.row(1);
    dw.row(2).setZero();
    out.gradient.head<3>() = grads.rowwise().sum() / n;
    out.gradient(3) = grads.cwiseProduct(dw).sum() / n;
  }
  return out;
}

namespace {

Eigen::Matrix3Xd checked_local(const KinematicChain& chain, const Eigen::MatrixXd& joints) {
  if (joints.cols() == 0) throw Error(ErrorCode::kConfiguration, "no joint samples");
  for (Eigen::Index i = 0; i < joints.cols(); ++i) kinematics::check_joints(chain, joints.col(i));
  return kinematics::local_positions(chain, joints);
}

}  // namespace

double expected_energy(const EnergyField& roi, const KinematicChain& chain, const BaseConfig& base,
                       const Eigen::MatrixXd& joints) {
  return estimate_energy(roi, checked_local(chain, joints), base, false).value;
}

Eigen::Vector4d expected_energy_gradient(const EnergyField& roi, const KinematicChain& chain,
                                         const BaseConfig& base, const Eigen::MatrixXd& joints) {
  return estimate_energy(roi, checked_local(chain, joints), base, true).gradient;
}

// --- Projection ------------------------------------------------------------

Projection project_to_boundary(const EnergyField& constraint, const Eigen::Vector2d& p, double tau,
                               int max_iterations, double epsilon) {
  if (constraint.input_dim() != 2) throw Error(ErrorCode::kShape, "constraint map must be 2D");
  const double target = logit(tau);
  Projection out{p, 0, false};
  Eigen::VectorXd grad;
  for (;;) {
    const double g = constraint.energy_and_gradient(out.point, grad);
    const double residual = g - target;
    if (std::abs(residual) <= epsilon) {
      out.converged = true;
      return out;
    }
    if (out.iterations >= max_iterations) return out;
    const double norm2 = grad.squaredNorm();
    if (std::sqrt(norm2) < 1e-12) {
      throw Error(ErrorCode::kStationaryPoint, "constraint gradient vanishes during projection");
    }
    out.point -= grad * (residual / norm2);
    ++out.iterations;
  }
}

bool feasible_xy(const EnergyField& constraint, const Eigen::Vector2d& p, double tau) {
  return constraint.membership_probability(p) >= tau;
}

// --- Optimiser -------------------------------------------------------------

SolveResult solve_mbpp(const EnergyField& roi, const EnergyField* constraint,
                       const KinematicChain& chain, const SolverConfig& config,
                       const BaseConfig& initial) {
  config.validate();
  if (!initial.vector().allFinite()) throw Error(ErrorCode::kConfiguration, "initial base is not finite");
  if (roi.input_dim() != 3) throw Error(ErrorCode::kShape, "ROI map must be 3D");

  Rng rng(derive_seed(config.seed, 0x3B0));
  SolveResult result;
  result.base = initial;
  result.trace.initial = initial;
  Eigen::Matrix3Xd local;
  if (config.resampling == Resampling::kFixed) {
    local = kinematics::local_positions(chain, kinematics::sample_joints(chain, config.samples, rng()));
  }

  BaseConfig c = initial;
  for (int t = 0; t < config.iterations; ++t) {
    if (config.resampling == Resampling::kFresh) {
      local = kinematics::local_positions(chain, kinematics::sample_joints(chain, config.samples, rng()));
    }
    const EnergyEstimate est = estimate_energy(roi, local, c, true, true);
    if (!std::isfinite(est.value) || !est.gradient.allFinite()) {
      throw DivergenceError("expected energy is not finite at iteration " + std::to_string(t),
                            result.trace);
    }
    TraceEntry entry;
    entry.iteration = t;
    entry.expected_energy = est.value;
    entry.gradient_norm = est.gradient.norm();

    const BaseConfig before = c;
    Eigen::Vector4d next = c.vector() + config.step * est.gradient;
    next(2) = std::clamp(next(2), config.z_min, config.z_max);
    next(3) = std::clamp(next(3), config.omega_min, config.omega_max);
    c = BaseConfig::from_vector(next);

    if (constraint != nullptr && !feasible_xy(*constraint, {c.x, c.y}, config.tau)) {
      entry.projected = true;
      bool ok = false;
      try {
        Projection p = project_to_boundary(*constraint, {c.x, c.y}, config.tau,
                                           config.project_iterations, config.epsilon);
        entry.projection_iterations = p.iterations;
        if (p.converged) {
          c.x = p.point.x();
          c.y = p.point.y();
          ok = true;
        }
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kStationaryPoint) throw;
      }
      if (!ok) {
        c.x = before.x;
        c.y = before.y;
        entry.reverted = true;
      }
    }
    entry.base = c;
    result.trace.entries.push_back(entry);
  }
  result.base = c;
  return result;
}

PlacementRegion placement_region(const Eigen::MatrixXd& roi_points,
                                 const Eigen::MatrixXd* permissible_xy, double reach) {
  PlacementRegion r;
  if (permissible_xy != nullptr && permissible_xy->cols() > 0) {
    r.lo = permissible_xy->topRows<2>().rowwise().minCoeff();
    r.hi = permissible_xy->topRows<2>().rowwise().maxCoeff();
    return r;
  }
  if (roi_points.cols() == 0) throw Error(ErrorCode::kEmptyPointSet, "no ROI points");
  r.lo = roi_points.topRows<2>().rowwise().minCoeff().array() - reach;
  r.hi = roi_points.topRows<2>().rowwise().maxCoeff().array() + reach;
  return r;
}

BaseConfig sample_feasible(const EnergyField* constraint, const PlacementRegion& region,
                           const SolverConfig& config, Rng& rng) {
  constexpr int kMaxRejections = 1000;
  for (int attempt = 0; attempt < kMaxRejections; ++attempt) {
    BaseConfig c;
    c.x = uniform(rng, region.lo.x(), region.hi.x());
    c.y = uniform(rng, region.lo.y(), region.hi.y());
    c.z = config.z_min == config.z_max ? config.z_min : uniform(rng, config.z_min, config.z_max);
    c.omega = config.omega_min == config.omega_max ? config.omega_min
                                                   : uniform(rng, config.omega_min, config.omega_max);
    if (constraint == nullptr || feasible_xy(*constraint, {c.x, c.y}, config.tau)) return c;
  }
  throw Error(ErrorCode::kInfeasible, "no feasible placement found in 1000 samples");
}

SolverConfig restart_config(const SolverConfig& config, int restart) {
  SolverConfig out = config;
  out.seed = derive_seed(config.seed, 0x1000 + static_cast<std::uint64_t>(restart));
  return out;
}

BaseConfig restart_initial(const EnergyField* constraint, const PlacementRegion& region,
                           const SolverConfig& config, int restart) {
  Rng rng(derive_seed(config.seed, 0x2000 + static_cast<std::uint64_t>(restart)));
  return sample_feasible(constraint, region, config, rng);
}

MultistartResult solve_multistart(const EnergyField& roi, const EnergyField* constraint,
                                  const KinematicChain& chain, const SolverConfig& config,
                                  const PlacementRegion& region, int restarts) {
  config.validate();
  if (restarts < 1) throw Error(ErrorCode::kConfiguration, "need at least one restart");
  MultistartResult out;
  for (int r = 0; r < restarts; ++r) {
    const BaseConfig initial = restart_initial(constraint, region, config, r);
    out.runs.push_back(solve_mbpp(roi, constraint, chain, restart_config(config, r), initial));
  }
  const Eigen::Matrix3Xd shared = kinematics::local_positions(
      chain, kinematics::sample_joints(chain, kSharedEvaluationSamples, derive_seed(config.seed, 0xE7A1)));
  for (int r = 0; r < restarts; ++r) {
    out.scores.push_back(estimate_energy(roi, shared, out.runs[r].base, false, true).value);
    if (out.scores[r] > out.scores[out.best_index]) out.best_index = r;
  }
  out.best = out.runs[out.best_index].base;
  return out;
}

}  // namespace sdi::solver
