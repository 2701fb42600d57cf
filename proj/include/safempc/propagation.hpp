#pragma once

// Ellipsoidal over-approximation of the learned system's reachable sets.
// One step linearizes the prior at the center z̄ = (p, u), adds the GP mean
// at z̄, and inflates by the box  beta*sigma(z̄) + L_dh l^2 / 2 + L_g l  where
// l is the largest distance from z̄ over the input set.

#include <span>
#include <vector>

#include "safempc/dynamics.hpp"
#include "safempc/ellipsoid.hpp"
#include "safempc/gp.hpp"

namespace safempc {

struct ReachSequence {
  std::vector<Ellipsoidd> sets;       // R_0 .. R_T
  std::vector<FeedbackLaw> laws;      // laws as applied (centers re-set to R_t)
  std::vector<Posterior> posteriors;  // GP posterior at z̄_t, t < T
  double beta = 0.0;

  std::size_t horizon() const { return laws.size(); }
};

struct StepResult {
  Ellipsoidd next;
  Posterior posterior;   // at z̄
  VectorXd half_width;   // d̃
};

/// [I; K] for feedback laws, I for open loop.
MatrixXd stacking_matrix(const MatrixXd& gain);

/// d̃ evaluating the GP at z̄ = center_input.
VectorXd remainder_bound(const Ellipsoidd& set, const MatrixXd& stacking,
                         const VectorXd& center_input, const GpModel& gp,
                         const DynamicsModel& dyn, double beta,
                         double tie_break = 0.0);

/// d̃ from a precomputed GP standard deviation at z̄. `tie_break` is
/// forwarded to max_weighted_norm.
VectorXd remainder_half_width(const Ellipsoidd& set, const MatrixXd& stacking,
                              const VectorXd& stddev, const GpModel& gp,
                              const DynamicsModel& dyn, double beta,
                              double tie_break = 0.0);

/// Closed-loop step; requires law.center == set.center().
StepResult propagate_step(const Ellipsoidd& set, const FeedbackLaw& law,
                          const GpModel& gp, const DynamicsModel& dyn,
                          double beta, double tie_break = 0.0);

Ellipsoidd one_step(const Ellipsoidd& set, const VectorXd& input,
                    const GpModel& gp, const DynamicsModel& dyn, double beta);

Ellipsoidd one_step_feedback(const Ellipsoidd& set, const FeedbackLaw& law,
                             const GpModel& gp, const DynamicsModel& dyn,
                             double beta);

/// Iterates one_step_feedback, re-centering each law on the current set.
ReachSequence multi_step(const Ellipsoidd& initial, std::span<const FeedbackLaw> laws,
                         const GpModel& gp, const DynamicsModel& dyn, double beta,
                         double tie_break = 0.0);

}  // namespace safempc
