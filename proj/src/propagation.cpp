#include "safempc/propagation.hpp"

#include <cmath>

#include "safempc/errors.hpp"

namespace safempc {

MatrixXd stacking_matrix(const MatrixXd& gain) {
  const auto nx = gain.cols();
  MatrixXd s(nx + gain.rows(), nx);
  s << MatrixXd::Identity(nx, nx), gain;
  return s;
}

VectorXd remainder_half_width(const Ellipsoidd& set, const MatrixXd& stacking,
                              const VectorXd& stddev, const GpModel& gp,
                              const DynamicsModel& dyn, double beta,
                              double tie_break) {
  const double l = set.shape().isZero(0.0)
                       ? 0.0
                       : max_weighted_norm(set.shape(), stacking, tie_break);
  return beta * stddev + dyn.gradient_lipschitz * (l * l / 2.0) +
         lipschitz_g(gp) * l;
}

VectorXd remainder_bound(const Ellipsoidd& set, const MatrixXd& stacking,
                         const VectorXd& center_input, const GpModel& gp,
                         const DynamicsModel& dyn, double beta,
                         double tie_break) {
  const Posterior post = gp.posterior(center_input);
  return remainder_half_width(set, stacking, post.stddev, gp, dyn, beta, tie_break);
}

StepResult propagate_step(const Ellipsoidd& set, const FeedbackLaw& law,
                          const GpModel& gp, const DynamicsModel& dyn,
                          double beta, double tie_break) {
  const auto nx = dyn.state_dim;
  const auto nu = dyn.input_dim;
  const VectorXd& p = set.center();
  if (p.size() != nx || law.offset.size() != nu || law.gain.rows() != nu ||
      law.gain.cols() != nx || law.center.size() != nx) {
    throw ConfigError("propagate_step: feedback law dimensions do not match the model");
  }
  if ((law.center - p).cwiseAbs().maxCoeff() >
      1e-12 * std::max(1.0, p.cwiseAbs().maxCoeff())) {
    throw ArgumentError("propagate_step: feedback law is not centered on the ellipsoid");
  }
  VectorXd zbar(nx + nu);
  zbar << p, law.offset;
  Posterior post = gp.posterior(zbar);
  const MatrixXd jac = dyn.jacobian_at(p, law.offset);
  const MatrixXd closed = jac.leftCols(nx) + jac.rightCols(nu) * law.gain;
  const VectorXd mean_next = dyn(p, law.offset) + post.mean;

  const Ellipsoidd linear = affine_transform(closed, mean_next - closed * p, set);
  VectorXd half = remainder_half_width(set, stacking_matrix(law.gain), post.stddev,
                                       gp, dyn, beta, tie_break);
  const Ellipsoidd box = rect_to_ellipsoid(HyperRectangled(VectorXd::Zero(nx), half));
  return {minkowski_sum_outer(linear, box), std::move(post), std::move(half)};
}

Ellipsoidd one_step(const Ellipsoidd& set, const VectorXd& input,
                    const GpModel& gp, const DynamicsModel& dyn, double beta) {
  return propagate_step(set, FeedbackLaw::open_loop(input, set.center()), gp, dyn, beta)
      .next;
}

Ellipsoidd one_step_feedback(const Ellipsoidd& set, const FeedbackLaw& law,
                             const GpModel& gp, const DynamicsModel& dyn,
                             double beta) {
  return propagate_step(set, law, gp, dyn, beta).next;
}

ReachSequence multi_step(const Ellipsoidd& initial, std::span<const FeedbackLaw> laws,
                         const GpModel& gp, const DynamicsModel& dyn, double beta,
                         double tie_break) {
  ReachSequence seq;
  seq.beta = beta;
  seq.sets.reserve(laws.size() + 1);
  seq.sets.push_back(initial);
  for (const FeedbackLaw& given : laws) {
    FeedbackLaw law = given;
    law.center = seq.sets.back().center();
    StepResult step = propagate_step(seq.sets.back(), law, gp, dyn, beta, tie_break);
    seq.laws.push_back(std::move(law));
    seq.posteriors.push_back(std::move(step.posterior));
    seq.sets.push_back(std::move(step.next));
  }
  return seq;
}

}  // namespace safempc
