#include "safempc/lqr.hpp"

#include <Eigen/LU>

#include "safempc/errors.hpp"

namespace safempc {

using Eigen::MatrixXd;

MatrixXd riccati_residual(const MatrixXd& a, const MatrixXd& b, const MatrixXd& q,
                          const MatrixXd& r, const MatrixXd& p) {
  const MatrixXd btpa = b.transpose() * p * a;
  const MatrixXd s = r + b.transpose() * p * b;
  return a.transpose() * p * a - p - btpa.transpose() * s.lu().solve(btpa) + q;
}

LqrSolution dlqr(const MatrixXd& a, const MatrixXd& b, const MatrixXd& q,
                 const MatrixXd& r) {
  const auto n = a.rows();
  if (a.cols() != n || b.rows() != n || q.rows() != n || q.cols() != n ||
      r.rows() != b.cols() || r.cols() != b.cols()) {
    throw ConfigError("dlqr: inconsistent matrix dimensions");
  }
  const MatrixXd id = MatrixXd::Identity(n, n);
  MatrixXd ak = a;
  MatrixXd gk = b * r.lu().solve(b.transpose());
  MatrixXd hk = q;
  for (int it = 0; it < 100; ++it) {
    const Eigen::PartialPivLU<MatrixXd> w(id + gk * hk);
    const MatrixXd w_a = w.solve(ak);
    const MatrixXd w_g = w.solve(gk);
    const MatrixXd h_next = hk + ak.transpose() * hk * w_a;
    gk = gk + ak * w_g * ak.transpose();
    ak = ak * w_a;
    const double change = (h_next - hk).norm();
    hk = (h_next + h_next.transpose()) / 2.0;
    if (!hk.allFinite()) break;
    if (change <= 1e-14 * hk.norm()) break;
  }
  MatrixXd p = hk;
  for (int it = 0; it < 50; ++it) {
    const MatrixXd btpa = b.transpose() * p * a;
    const MatrixXd s = r + b.transpose() * p * b;
    MatrixXd next = a.transpose() * p * a - btpa.transpose() * s.lu().solve(btpa) + q;
    next = (next + next.transpose()) / 2.0;
    const double change = (next - p).norm();
    p = std::move(next);
    if (change <= 1e-15 * p.norm()) break;
  }
  if (!p.allFinite() || riccati_residual(a, b, q, r, p).norm() > 1e-6 * (1.0 + p.norm())) {
    throw NumericalError("dlqr: Riccati iteration did not converge");
  }
  const MatrixXd s = r + b.transpose() * p * b;
  return {p, s.lu().solve(b.transpose() * p * a)};
}

}  // namespace safempc
