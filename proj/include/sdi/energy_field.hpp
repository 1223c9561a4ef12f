#pragma once

#include <cmath>

#include <Eigen/Core>

namespace sdi {

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

/// Inverse sigmoid; logit(0.95) = ln 19.
inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// A differentiable scalar energy over R^d. Spatial instruction maps and the
/// analytic fields used in tests share this interface; membership
/// probability is sigmoid(energy).
class EnergyField {
 public:
  virtual ~EnergyField() = default;

  virtual int input_dim() const = 0;

  /// Evaluates a batch of points (one per column). Fills `values` and, when
  /// `gradients` is non-null, the d x n matrix of input gradients.
  /// Implementations must be safe to call concurrently.
  virtual void evaluate(const Eigen::Ref<const Eigen::MatrixXd>& points,
                        Eigen::VectorXd& values, Eigen::MatrixXd* gradients) const = 0;

  /// Same contract as evaluate() at reduced precision where an
  /// implementation has a cheaper path; defaults to evaluate().
  virtual void evaluate_fast(const Eigen::Ref<const Eigen::MatrixXd>& points,
                             Eigen::VectorXd& values, Eigen::MatrixXd* gradients) const {
    evaluate(points, values, gradients);
  }

  double energy(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  double energy_and_gradient(const Eigen::Ref<const Eigen::VectorXd>& x,
                             Eigen::VectorXd& gradient) const;
  double membership_probability(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    return sigmoid(energy(x));
  }

 protected:
  void check_dim(Eigen::Index rows) const;
};

}  // namespace sdi
