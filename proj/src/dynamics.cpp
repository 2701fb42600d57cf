#include "safempc/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "safempc/errors.hpp"

namespace safempc {

MatrixXd DynamicsModel::jacobian_at(const VectorXd& x, const VectorXd& u) const {
  if (jacobian) return jacobian(x, u);
  return finite_difference_jacobian(step, x, u);
}

void DynamicsModel::validate() const {
  if (state_dim <= 0 || input_dim <= 0) {
    throw ConfigError("DynamicsModel: state and input dimensions must be positive");
  }
  if (!step) throw ConfigError("DynamicsModel: missing step function");
  if (gradient_lipschitz.size() != state_dim) {
    throw ConfigError("DynamicsModel: expected " + std::to_string(state_dim) +
                      " gradient Lipschitz constants, got " +
                      std::to_string(gradient_lipschitz.size()));
  }
  if ((gradient_lipschitz.array() < 0.0).any()) {
    throw ConfigError("DynamicsModel: negative gradient Lipschitz constant");
  }
}

MatrixXd finite_difference_jacobian(const DynamicsModel::StepFn& step,
                                    const VectorXd& x, const VectorXd& u,
                                    double rel_step) {
  const auto nx = x.size();
  const auto nu = u.size();
  VectorXd xp = x, up = u;
  MatrixXd jac;
  for (Eigen::Index i = 0; i < nx + nu; ++i) {
    double& slot = i < nx ? xp(i) : up(i - nx);
    const double orig = slot;
    const double h = rel_step * std::max(1.0, std::abs(orig));
    slot = orig + h;
    const VectorXd fp = step(xp, up);
    slot = orig - h;
    const VectorXd fm = step(xp, up);
    slot = orig;
    if (i == 0) jac.resize(fp.size(), nx + nu);
    jac.col(i) = (fp - fm) / (2.0 * h);
  }
  return jac;
}

DynamicsModel linear_dynamics(const MatrixXd& a, const MatrixXd& b) {
  if (a.rows() != a.cols() || b.rows() != a.rows()) {
    throw ConfigError("linear_dynamics: A must be square with B of matching rows");
  }
  DynamicsModel model;
  model.state_dim = a.rows();
  model.input_dim = b.cols();
  model.step = [a, b](const VectorXd& x, const VectorXd& u) -> VectorXd {
    return a * x + b * u;
  };
  MatrixXd jac(a.rows(), a.cols() + b.cols());
  jac << a, b;
  model.jacobian = [jac](const VectorXd&, const VectorXd&) { return jac; };
  model.gradient_lipschitz = VectorXd::Zero(a.rows());
  model.constant_jacobian = true;
  return model;
}

}  // namespace safempc
