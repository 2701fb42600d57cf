#include "safempc/gp.hpp"

#include <cmath>
#include <string>

#include <Eigen/Cholesky>

#include "safempc/errors.hpp"

namespace safempc {

namespace {

constexpr double kSqrt5 = 2.23606797749978969641;

// Jitter ladder tried when K + lambda^2 I fails to factorize.
constexpr double kJitterLadder[] = {0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6};

}  // namespace

double matern52(double r, double variance) {
  const double s = kSqrt5 * r;
  return variance * (1.0 + s + s * s / 3.0) * std::exp(-s);
}

double matern52_max_slope(double variance) {
  const double r = (kSqrt5 + 5.0) / 10.0;
  return variance * (5.0 / 3.0) * r * (1.0 + kSqrt5 * r) * std::exp(-kSqrt5 * r);
}

double Kernel::operator()(const VectorXd& a, const VectorXd& b) const {
  double k = 0.0;
  if (has_linear()) k += linear_variance * a.dot(b);
  if (has_matern()) {
    const double r = ((a - b).array() / lengthscales.array()).matrix().norm();
    k += matern52(r, signal_variance);
  }
  return k;
}

VectorXd Kernel::cross(const MatrixXd& inputs, const VectorXd& z) const {
  VectorXd k = VectorXd::Zero(inputs.rows());
  if (has_linear()) k.noalias() += linear_variance * (inputs * z);
  if (has_matern()) {
    const Eigen::RowVectorXd zs = (z.array() / lengthscales.array()).matrix().transpose();
    const MatrixXd scaled =
        inputs.array().rowwise() / lengthscales.transpose().array();
    const Eigen::ArrayXd s =
        kSqrt5 * (scaled.rowwise() - zs).rowwise().norm().array();
    k.array() += signal_variance * (1.0 + s + s.square() / 3.0) * (-s).exp();
  }
  return k;
}

MatrixXd Kernel::gram(const MatrixXd& inputs) const {
  const auto n = inputs.rows();
  MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    k.col(i) = cross(inputs, inputs.row(i).transpose());
  }
  return (k + k.transpose()) / 2.0;
}

double Kernel::diag(const VectorXd& z) const {
  double k = 0.0;
  if (has_linear()) k += linear_variance * z.squaredNorm();
  if (has_matern()) k += signal_variance;
  return k;
}

void Kernel::validate(Eigen::Index input_dim) const {
  if (has_matern()) {
    if (lengthscales.size() != input_dim) {
      throw ConfigError("Kernel: expected " + std::to_string(input_dim) +
                        " lengthscales, got " + std::to_string(lengthscales.size()));
    }
    if (!(lengthscales.array() > 0.0).all()) {
      throw ConfigError("Kernel: lengthscales must be positive");
    }
    if (!(signal_variance > 0.0)) {
      throw ConfigError("Kernel: signal variance must be positive");
    }
  }
  if (has_linear()) {
    if (kind == KernelKind::kLinear ? !(linear_variance > 0.0)
                                    : !(linear_variance >= 0.0)) {
      throw ConfigError("Kernel: invalid linear variance");
    }
  }
}

GpModel GpModel::fit(const MatrixXd& inputs, const MatrixXd& observations,
                     const DynamicsModel& prior, GpOptions options) {
  prior.validate();
  const auto nx = prior.state_dim;
  const auto d = prior.state_dim + prior.input_dim;
  if (inputs.rows() != observations.rows()) {
    throw ConfigError("GpModel::fit: inputs and observations have different row counts");
  }
  if (inputs.rows() > 0 && (inputs.cols() != d || observations.cols() != nx)) {
    throw ConfigError("GpModel::fit: expected inputs with " + std::to_string(d) +
                      " columns and observations with " + std::to_string(nx));
  }
  if (static_cast<Eigen::Index>(options.kernels.size()) != nx ||
      options.noise_std.size() != nx || options.lipschitz.size() != nx) {
    throw ConfigError("GpModel::fit: need one kernel, noise level and Lipschitz "
                      "constant per state dimension");
  }
  for (const auto& k : options.kernels) k.validate(d);
  if (!(options.noise_std.array() > 0.0).all()) {
    throw ConfigError("GpModel::fit: noise levels must be positive");
  }
  if ((options.lipschitz.array() < 0.0).any()) {
    throw ConfigError("GpModel::fit: negative Lipschitz constant");
  }

  GpModel model;
  model.input_dim_ = d;
  model.inputs_ = inputs.rows() > 0 ? inputs : MatrixXd(0, d);
  model.observations_ = observations.rows() > 0 ? observations : MatrixXd(0, nx);
  model.prior_ = prior.step;
  model.prior_state_dim_ = nx;
  model.options_ = std::move(options);

  const auto n = model.inputs_.rows();
  MatrixXd residual(n, nx);
  for (Eigen::Index i = 0; i < n; ++i) {
    const VectorXd z = model.inputs_.row(i).transpose();
    residual.row(i) = (model.observations_.row(i).transpose() -
                       prior(z.head(nx), z.tail(prior.input_dim)))
                          .transpose();
  }
  model.outputs_.resize(static_cast<std::size_t>(nx));
  for (std::size_t j = 0; j < model.outputs_.size(); ++j) {
    auto& out = model.outputs_[j];
    out.targets = residual.col(static_cast<Eigen::Index>(j));
    const Kernel& k = model.options_.kernels[j];
    if (k.has_matern()) {
      out.scaled_inputs = model.inputs_.array().rowwise() / k.lengthscales.transpose().array();
    }
    model.factorize(out, j);
  }
  return model;
}

void GpModel::factorize(Output& out, std::size_t j) const {
  const auto n = inputs_.rows();
  const double noise_var = options_.noise_std(static_cast<Eigen::Index>(j)) *
                           options_.noise_std(static_cast<Eigen::Index>(j));
  const MatrixXd gram = options_.kernels[j].gram(inputs_);
  for (double jitter : kJitterLadder) {
    MatrixXd a = gram;
    a.diagonal().array() += noise_var + jitter;
    Eigen::LLT<MatrixXd> llt(a);
    if (llt.info() == Eigen::Success) {
      out.chol = llt.matrixL();
      out.jitter = jitter;
      out.alpha = llt.solve(out.targets);
      return;
    }
  }
  throw NumericalError("GpModel: kernel matrix of output " + std::to_string(j) +
                       " is ill-conditioned (Cholesky failed at jitter 1e-6, n = " +
                       std::to_string(n) + ")");
}

Posterior GpModel::posterior(const VectorXd& z) const {
  const auto nx = output_dim();
  Posterior post{VectorXd::Zero(nx), VectorXd::Zero(nx)};
  const auto n = inputs_.rows();
  for (std::size_t j = 0; j < outputs_.size(); ++j) {
    const Kernel& k = options_.kernels[j];
    const auto& out = outputs_[j];
    const double prior_var = k.diag(z);
    if (n == 0) {
      post.stddev(static_cast<Eigen::Index>(j)) = std::sqrt(std::max(0.0, prior_var));
      continue;
    }
    VectorXd kz = VectorXd::Zero(n);
    if (k.has_linear()) kz.noalias() += k.linear_variance * (inputs_ * z);
    if (k.has_matern()) {
      const Eigen::RowVectorXd zs =
          (z.array() / k.lengthscales.array()).matrix().transpose();
      const Eigen::ArrayXd s =
          kSqrt5 * (out.scaled_inputs.rowwise() - zs).rowwise().norm().array();
      kz.array() += k.signal_variance * (1.0 + s + s.square() / 3.0) * (-s).exp();
    }
    post.mean(static_cast<Eigen::Index>(j)) = kz.dot(out.alpha);
    out.chol.triangularView<Eigen::Lower>().solveInPlace(kz);
    const double var = prior_var - kz.squaredNorm();
    post.stddev(static_cast<Eigen::Index>(j)) = std::sqrt(std::max(0.0, var));
  }
  return post;
}

GpModel GpModel::add_observation(const VectorXd& z, const VectorXd& y) const {
  const auto nx = prior_state_dim_;
  if (z.size() != input_dim_ || y.size() != nx) {
    throw ConfigError("GpModel::add_observation: dimension mismatch");
  }
  GpModel next = *this;
  const auto n = inputs_.rows();
  next.inputs_.conservativeResize(n + 1, Eigen::NoChange);
  next.inputs_.row(n) = z.transpose();
  next.observations_.conservativeResize(n + 1, Eigen::NoChange);
  next.observations_.row(n) = y.transpose();
  const VectorXd residual = y - prior_(z.head(nx), z.tail(input_dim_ - nx));

  for (std::size_t j = 0; j < next.outputs_.size(); ++j) {
    auto& out = next.outputs_[j];
    const Kernel& k = options_.kernels[j];
    out.targets.conservativeResize(n + 1);
    out.targets(n) = residual(static_cast<Eigen::Index>(j));
    if (k.has_matern()) {
      out.scaled_inputs.conservativeResize(n + 1, input_dim_);
      out.scaled_inputs.row(n) = (z.array() / k.lengthscales.array()).matrix().transpose();
    }
    const double noise_var = options_.noise_std(static_cast<Eigen::Index>(j)) *
                             options_.noise_std(static_cast<Eigen::Index>(j));
    VectorXd col = k.cross(inputs_, z);
    const double corner = k.diag(z) + noise_var + out.jitter;
    out.chol.triangularView<Eigen::Lower>().solveInPlace(col);
    const double pivot = corner - col.squaredNorm();
    if (!(pivot > 1e-12 * corner)) {
      next.factorize(out, j);
      continue;
    }
    MatrixXd chol = MatrixXd::Zero(n + 1, n + 1);
    chol.topLeftCorner(n, n) = out.chol;
    chol.block(n, 0, 1, n) = col.transpose();
    chol(n, n) = std::sqrt(pivot);
    out.chol = std::move(chol);
    out.alpha = out.chol.triangularView<Eigen::Lower>().solve(out.targets);
    out.chol.triangularView<Eigen::Lower>().transpose().solveInPlace(out.alpha);
  }
  return next;
}

double theoretical_beta(double rkhs_bound, double noise_std, double delta,
                        double information_capacity) {
  if (!(delta > 0.0 && delta <= 1.0)) {
    throw ConfigError("theoretical_beta: delta must lie in (0, 1]");
  }
  if (!(rkhs_bound > 0.0) || noise_std < 0.0 || information_capacity < 0.0) {
    throw ConfigError("theoretical_beta: invalid RKHS bound, noise or capacity");
  }
  return rkhs_bound +
         4.0 * noise_std * std::sqrt(information_capacity + 1.0 + std::log(1.0 / delta));
}

double beta(const GpModel& model, std::optional<ConfidenceParams> params) {
  const ConfidenceParams& p = params ? *params : model.options().confidence;
  if (p.mode == BetaMode::kFixed) {
    if (!p.fixed_beta || !(*p.fixed_beta > 0.0)) {
      throw ConfigError("beta: fixed mode requires a positive override");
    }
    return *p.fixed_beta;
  }
  if (!p.rkhs_bound || !p.delta) {
    throw ConfigError("beta: theoretical mode requires rkhs_bound and delta");
  }
  const double gamma = mutual_information(model, model.inputs());
  return theoretical_beta(*p.rkhs_bound, model.options().noise_std.maxCoeff(),
                          *p.delta, gamma);
}

double mutual_information(const GpModel& model, const MatrixXd& inputs) {
  if (inputs.rows() == 0) return 0.0;
  double info = 0.0;
  for (Eigen::Index j = 0; j < model.output_dim(); ++j) {
    const double noise = model.noise_std(j);
    MatrixXd a = model.kernel(j).gram(inputs) / (noise * noise);
    a.diagonal().array() += 1.0;
    Eigen::LLT<MatrixXd> llt(a);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("mutual_information: I + K / lambda^2 is not positive definite");
    }
    info += MatrixXd(llt.matrixL()).diagonal().array().log().sum();
  }
  return info;
}

VectorXd lipschitz_g(const GpModel& model) { return model.options().lipschitz; }

}  // namespace safempc
