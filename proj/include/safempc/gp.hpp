#pragma once

// Independent per-output Gaussian processes over z = (x, u) for the model
// error g = f - h. Targets are residuals y - h(z); posteriors are reported in
// residual space (the prior h is not added back).

#include <optional>
#include <vector>

#include <Eigen/Core>

#include "safempc/dynamics.hpp"

namespace safempc {

enum class KernelKind { kLinear, kMatern52, kLinearPlusMatern52 };

/// k(a, b) = s_lin * a.b  +  s_f * m52(||(a - b) / l||)   (terms per kind).
struct Kernel {
  KernelKind kind = KernelKind::kLinearPlusMatern52;
  VectorXd lengthscales;         // Matérn ARD lengthscales
  double signal_variance = 1.0;  // Matérn variance
  double linear_variance = 0.0;  // linear-term variance

  bool has_matern() const { return kind != KernelKind::kLinear; }
  bool has_linear() const { return kind != KernelKind::kMatern52; }

  double operator()(const VectorXd& a, const VectorXd& b) const;
  /// k(Z_i, z) for every row Z_i.
  VectorXd cross(const MatrixXd& inputs, const VectorXd& z) const;
  MatrixXd gram(const MatrixXd& inputs) const;
  double diag(const VectorXd& z) const;
  void validate(Eigen::Index input_dim) const;
};

/// Matérn-5/2 profile sigma^2 (1 + sqrt5 r + 5 r^2 / 3) exp(-sqrt5 r).
double matern52(double r, double variance);
/// sup_r |d/dr matern52(r)|.
double matern52_max_slope(double variance);

enum class BetaMode { kTheoretical, kFixed };

struct ConfidenceParams {
  BetaMode mode = BetaMode::kFixed;
  std::optional<double> fixed_beta = 2.0;
  std::optional<double> rkhs_bound;  // B_g
  std::optional<double> delta;       // confidence level, (0, 1]
};

struct GpOptions {
  std::vector<Kernel> kernels;  // one per output dimension
  VectorXd noise_std;           // lambda_j
  ConfidenceParams confidence;
  VectorXd lipschitz;           // L_g per output dimension
};

struct Posterior {
  VectorXd mean;
  VectorXd stddev;
};

class GpModel {
 public:
  /// Residual targets y - h(Z). Zero rows give the prior GP.
  static GpModel fit(const MatrixXd& inputs, const MatrixXd& observations,
                     const DynamicsModel& prior, GpOptions options);

  Posterior posterior(const VectorXd& z) const;

  /// Appends one observation by extending the Cholesky factor.
  GpModel add_observation(const VectorXd& z, const VectorXd& y) const;

  Eigen::Index num_samples() const { return inputs_.rows(); }
  Eigen::Index input_dim() const { return input_dim_; }
  Eigen::Index output_dim() const { return static_cast<Eigen::Index>(outputs_.size()); }

  const MatrixXd& inputs() const { return inputs_; }
  /// Raw observations y, one row per sample.
  const MatrixXd& observations() const { return observations_; }
  VectorXd residuals(Eigen::Index output) const { return outputs_[static_cast<std::size_t>(output)].targets; }
  const MatrixXd& cholesky(Eigen::Index output) const { return outputs_[static_cast<std::size_t>(output)].chol; }
  double jitter(Eigen::Index output) const { return outputs_[static_cast<std::size_t>(output)].jitter; }
  const GpOptions& options() const { return options_; }
  const Kernel& kernel(Eigen::Index output) const { return options_.kernels[static_cast<std::size_t>(output)]; }
  double noise_std(Eigen::Index output) const { return options_.noise_std(output); }

 private:
  struct Output {
    VectorXd targets;
    MatrixXd chol;  // lower, (K + (lambda^2 + jitter) I) = L L^T
    VectorXd alpha;
    MatrixXd scaled_inputs;  // Z ./ lengthscales, for the Matérn term
    double jitter = 0.0;
  };

  GpModel() = default;
  void factorize(Output& out, std::size_t j) const;

  Eigen::Index input_dim_ = 0;
  MatrixXd inputs_;
  MatrixXd observations_;
  DynamicsModel::StepFn prior_;
  Eigen::Index prior_state_dim_ = 0;
  GpOptions options_;
  std::vector<Output> outputs_;
};

/// B_g + 4 lambda sqrt(gamma + 1 + ln(1/delta)).
double theoretical_beta(double rkhs_bound, double noise_std, double delta,
                        double information_capacity);

/// Confidence scaling per the model's ConfidenceParams (or `params` when
/// given). Theoretical mode uses the realized mutual information of the
/// training set as gamma and the largest per-output noise level.
double beta(const GpModel& model, std::optional<ConfidenceParams> params = std::nullopt);

/// 1/2 sum_j log det(I + K_j(Z) / lambda_j^2).
double mutual_information(const GpModel& model, const MatrixXd& inputs);

/// Config-supplied L_g per output dimension.
VectorXd lipschitz_g(const GpModel& model);

}  // namespace safempc
