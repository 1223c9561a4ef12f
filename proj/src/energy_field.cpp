#include "sdi/energy_field.hpp"

#include <string>

#include "sdi/error.hpp"

namespace sdi {

void EnergyField::check_dim(Eigen::Index rows) const {
  if (rows != input_dim()) {
    throw Error(ErrorCode::kShape, "expected " + std::to_string(input_dim()) +
                                       "-dimensional input, got " + std::to_string(rows));
  }
}

double EnergyField::energy(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  check_dim(x.rows());
  Eigen::VectorXd values;
  evaluate(x, values, nullptr);
  return values(0);
}

double EnergyField::energy_and_gradient(const Eigen::Ref<const Eigen::VectorXd>& x,
                                        Eigen::VectorXd& gradient) const {
  check_dim(x.rows());
  Eigen::VectorXd values;
  Eigen::MatrixXd grads;
  evaluate(x, values, &grads);
  gradient = grads.col(0);
  return values(0);
}

}  // namespace sdi
