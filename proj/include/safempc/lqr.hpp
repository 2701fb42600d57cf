#pragma once

#include <Eigen/Core>

namespace safempc {

/// Infinite-horizon discrete LQR: P solves the DARE, u = -K x.
struct LqrSolution {
  Eigen::MatrixXd cost;  // P
  Eigen::MatrixXd gain;  // K
};

/// Structured doubling iteration followed by a fixed-point polish. Throws
/// NumericalError if (A, B) is not stabilizable within the iteration budget.
LqrSolution dlqr(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                 const Eigen::MatrixXd& q, const Eigen::MatrixXd& r);

/// A^T P A - P - A^T P B (R + B^T P B)^-1 B^T P A + Q.
Eigen::MatrixXd riccati_residual(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                 const Eigen::MatrixXd& q, const Eigen::MatrixXd& r,
                                 const Eigen::MatrixXd& p);

}  // namespace safempc
