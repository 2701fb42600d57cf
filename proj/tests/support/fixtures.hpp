#pragma once

// Small builders shared by the unit and acceptance tests.

#include <random>
#include <vector>

#include "safempc/dynamics.hpp"
#include "safempc/gp.hpp"
#include "support/oracles.hpp"

namespace fixture {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline safempc::Kernel kernel(Eigen::Index dim, double lengthscale, double signal_variance,
                              double linear_variance) {
  safempc::Kernel k;
  k.kind = linear_variance > 0.0 ? safempc::KernelKind::kLinearPlusMatern52
                                 : safempc::KernelKind::kMatern52;
  k.lengthscales = VectorXd::Constant(dim, lengthscale);
  k.signal_variance = signal_variance;
  k.linear_variance = linear_variance;
  return k;
}

inline safempc::GpOptions options(Eigen::Index dim, Eigen::Index outputs, double lengthscale,
                                  double signal_variance, double linear_variance,
                                  double noise_std) {
  safempc::GpOptions o;
  for (Eigen::Index j = 0; j < outputs; ++j) {
    o.kernels.push_back(kernel(dim, lengthscale, signal_variance, linear_variance));
  }
  o.noise_std = VectorXd::Constant(outputs, noise_std);
  o.lipschitz = VectorXd::Zero(outputs);
  return o;
}

/// h(x, u) = 0, so GP targets equal the raw observations.
inline safempc::DynamicsModel zero_prior(Eigen::Index nx, Eigen::Index nu) {
  return safempc::linear_dynamics(MatrixXd::Zero(nx, nx), MatrixXd::Zero(nx, nu));
}

inline MatrixXd uniform_rows(Eigen::Index n, Eigen::Index dim, double box, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-box, box);
  MatrixXd z(n, dim);
  for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = u(rng);
  return z;
}

/// Sound bound on sup ||grad f|| for a Matérn-5/2 expansion: each term's
/// slope is at most max_slope / min lengthscale.
inline double lipschitz_bound(const oracle::RkhsFunction& f) {
  const double r = (std::sqrt(5.0) + 5.0) / 10.0;  // argmax of the radial slope
  const double slope = f.signal_variance * (5.0 / 3.0) * r * (1.0 + std::sqrt(5.0) * r) *
                       std::exp(-std::sqrt(5.0) * r);
  double linear = 0.0;
  if (f.linear_variance > 0.0) {
    linear = f.linear_variance * (f.centers.transpose() * f.alpha).norm();
  }
  return f.alpha.cwiseAbs().sum() * slope / f.lengthscales.minCoeff() + linear;
}

}  // namespace fixture

namespace fixture {

/// x+ = A x + B u + g(x, u) with each g_j a Matérn-5/2 kernel expansion of
/// known RKHS norm, and a GP (same kernel, theoretical beta) trained on
/// noisy samples. L_g is a sound analytic bound, so the propagated sets
/// must contain every true successor.
struct SyntheticSystem {
  safempc::DynamicsModel prior;
  std::vector<oracle::RkhsFunction> error;
  safempc::GpModel gp;
  double beta = 0.0;

  VectorXd g(const VectorXd& x, const VectorXd& u) const {
    VectorXd z(x.size() + u.size());
    z << x, u;
    VectorXd out(static_cast<Eigen::Index>(error.size()));
    for (std::size_t j = 0; j < error.size(); ++j) out(static_cast<Eigen::Index>(j)) = error[j](z);
    return out;
  }
  VectorXd step(const VectorXd& x, const VectorXd& u) const { return prior(x, u) + g(x, u); }
};

inline SyntheticSystem synthetic_system(std::mt19937_64& rng, int samples = 60,
                                        double rkhs_norm = 0.05, double noise = 0.01) {
  MatrixXd a(2, 2), b(2, 1);
  a << 1.0, 0.05, 0.25, 1.0;
  b << 0.005, 0.1;
  const auto prior = safempc::linear_dynamics(a, b);
  const VectorXd ls = VectorXd::Constant(3, 0.6);
  const double variance = 0.01;

  std::vector<oracle::RkhsFunction> error;
  for (int j = 0; j < 2; ++j) {
    error.push_back(oracle::random_rkhs_function(3, 12, rkhs_norm, ls, variance, 0.0, 1.0, rng));
  }
  auto opts = options(3, 2, 0.6, variance, 0.0, noise);
  opts.confidence.mode = safempc::BetaMode::kTheoretical;
  opts.confidence.rkhs_bound = rkhs_norm;
  opts.confidence.delta = 0.01;
  for (int j = 0; j < 2; ++j) opts.lipschitz(j) = lipschitz_bound(error[static_cast<std::size_t>(j)]);

  const MatrixXd z = uniform_rows(samples, 3, 1.0, rng);
  MatrixXd y(samples, 2);
  std::normal_distribution<double> eps(0.0, noise);
  for (Eigen::Index i = 0; i < samples; ++i) {
    const VectorXd zi = z.row(i).transpose();
    for (int j = 0; j < 2; ++j) {
      y(i, j) = (a.row(j) * zi.head(2))(0) + b(j, 0) * zi(2) + error[static_cast<std::size_t>(j)](zi) +
                eps(rng);
    }
  }
  SyntheticSystem sys{prior, std::move(error), safempc::GpModel::fit(z, y, prior, opts), 0.0};
  sys.beta = safempc::beta(sys.gp);
  return sys;
}

}  // namespace fixture
