#pragma once

#include <functional>

#include <Eigen/Core>

namespace safempc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Prior model h(x, u) of the one-step dynamics x+ = h(x, u) + g(x, u).
struct DynamicsModel {
  using StepFn = std::function<VectorXd(const VectorXd& x, const VectorXd& u)>;
  /// Returns J_h = [A, B], n_x x (n_x + n_u).
  using JacobianFn = std::function<MatrixXd(const VectorXd& x, const VectorXd& u)>;

  Eigen::Index state_dim = 0;
  Eigen::Index input_dim = 0;
  StepFn step;
  /// Optional; central finite differences are used when empty.
  JacobianFn jacobian;
  /// Lipschitz constants of the gradients of h_j, one per state dimension.
  VectorXd gradient_lipschitz;
  /// The Jacobian does not depend on (x, u) (linear prior).
  bool constant_jacobian = false;

  VectorXd operator()(const VectorXd& x, const VectorXd& u) const {
    return step(x, u);
  }

  MatrixXd jacobian_at(const VectorXd& x, const VectorXd& u) const;

  /// Throws ConfigError when the callbacks or sizes are inconsistent.
  void validate() const;
};

/// Affine state feedback pi(x) = K (x - p) + u.
struct FeedbackLaw {
  MatrixXd gain;    // K, n_u x n_x
  VectorXd offset;  // u
  VectorXd center;  // p

  VectorXd operator()(const VectorXd& x) const {
    return gain * (x - center) + offset;
  }

  static FeedbackLaw open_loop(const VectorXd& u, const VectorXd& p) {
    return {MatrixXd::Zero(u.size(), p.size()), u, p};
  }
};

/// Central differences of `step` with step size rel_step * max(1, |z_i|).
MatrixXd finite_difference_jacobian(const DynamicsModel::StepFn& step,
                                    const VectorXd& x, const VectorXd& u,
                                    double rel_step = 1e-6);

/// A linear prior x+ = A x + B u with constant Jacobian.
DynamicsModel linear_dynamics(const MatrixXd& a, const MatrixXd& b);

}  // namespace safempc
