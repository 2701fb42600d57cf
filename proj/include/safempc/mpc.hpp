#pragma once

// Safety-constrained MPC over ellipsoidal reachable sets, the joint
// performance/safety variant, and the receding-horizon controller that falls
// back to the shifted previous plan (and finally the safety controller) when
// a solve is infeasible.

#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "safempc/dynamics.hpp"
#include "safempc/ellipsoid.hpp"
#include "safempc/gp.hpp"
#include "safempc/propagation.hpp"
#include "safempc/solver.hpp"

namespace safempc {

enum class GainPolicy {
  kLqr,   // K_t from the LQR of the linearized prior at the predicted center
  kZero,  // open loop
};

struct SafeMpcConfig {
  int horizon = 1;              // T
  int performance_horizon = 5;  // H
  int shared_controls = 1;      // r
  Polytoped state_constraints;  // X
  Polytoped input_constraints;  // U
  Polytoped safe_set;           // X_safe
  GainPolicy gain_policy = GainPolicy::kLqr;
  MatrixXd lqr_state_weight;
  MatrixXd lqr_input_weight;
  SolverSettings solver;
  double margin_tolerance = 1e-6;
  double tie_break = 1e-12;
  /// Static exploration: x_0 becomes a decision variable within this box.
  bool optimize_initial_state = false;
  VectorXd initial_state_lower;
  VectorXd initial_state_upper;

  /// Throws ConfigError on inconsistent dimensions, non-compact polytopes,
  /// X_safe not inside X, or r outside {1, ..., min(T, H)}.
  void validate(Eigen::Index state_dim, Eigen::Index input_dim) const;
};

/// Mean-equivalent performance state N(m, S) with diagonal S.
struct PerformanceState {
  VectorXd mean;
  MatrixXd covariance;
};

using SafetyObjective = std::function<double(const ReachSequence&)>;
using PerformanceObjective =
    std::function<double(const std::vector<PerformanceState>&, const ReachSequence&)>;
using PerformanceModel =
    std::function<PerformanceState(const PerformanceState&, const VectorXd& input)>;

struct PlanSolution {
  bool feasible = false;
  SolveStatus status = SolveStatus::kFailed;
  std::vector<FeedbackLaw> laws;  // pi_0 .. pi_{T-1}
  ReachSequence reach;            // R_0 .. R_T
  VectorXd margins;
  double objective = 0.0;
  std::vector<PerformanceState> performance;  // s_0 .. s_H (joint mode)
  VectorXd decisions;
  std::string diagnostic;

  double min_margin() const {
    return margins.size() ? margins.minCoeff() : 0.0;
  }
};

/// m+ = h(m, u) + mu(m, u), S+ = diag(sigma^2(m, u)).
PerformanceState mean_equivalent_step(const PerformanceState& state,
                                      const VectorXd& input, const GpModel& gp,
                                      const DynamicsModel& dyn);

/// Margins of pi(R) = E(u, K Q K^T) against U.
VectorXd control_constraint_residuals(const FeedbackLaw& law, const Ellipsoidd& set,
                                      const Polytoped& inputs);

/// Propagates the decision vector and returns the reach sequence and all
/// constraint margins in solver order: controls t = 0..T-1, states
/// t = 1..T-1, terminal set, and x_0 in X when the initial state is free.
struct PlanEvaluation {
  ReachSequence reach;
  VectorXd margins;
  std::vector<PerformanceState> performance;
};

class PlanEvaluator {
 public:
  PlanEvaluator(const VectorXd& state, const GpModel& gp, const DynamicsModel& dyn,
                const SafeMpcConfig& cfg, double beta, bool joint,
                PerformanceModel perf_model = {});

  PlanEvaluation evaluate(const VectorXd& decisions) const;

  Eigen::Index num_decisions() const { return lower_.size(); }
  const VectorXd& lower() const { return lower_; }
  const VectorXd& upper() const { return upper_; }
  /// Decision-vector offsets of x_0 and the free performance controls.
  Eigen::Index initial_state_offset() const { return x0_offset_; }
  Eigen::Index performance_offset() const { return perf_offset_; }

  MatrixXd feedback_gain(const VectorXd& center, const VectorXd& input) const;

 private:
  VectorXd state_;
  const GpModel& gp_;
  const DynamicsModel& dyn_;
  const SafeMpcConfig& cfg_;
  double beta_;
  bool joint_;
  PerformanceModel perf_model_;
  Eigen::Index x0_offset_ = -1;
  Eigen::Index perf_offset_ = -1;
  VectorXd lower_, upper_;
  mutable std::optional<std::pair<MatrixXd, MatrixXd>> gain_key_;
  mutable MatrixXd gain_value_;
};

/// Safety MPC with R_0 = {x_t}. Never throws on solver trouble: an
/// unsuccessful solve returns feasible = false with a diagnostic.
PlanSolution solve_mpc(const VectorXd& state, const GpModel& gp,
                       const DynamicsModel& dyn, const SafeMpcConfig& cfg,
                       const SafetyObjective& objective, std::mt19937_64& rng,
                       const std::vector<VectorXd>& warm_starts = {});

/// Joint problem: the safety constraints plus a performance trajectory over
/// H steps whose first r controls are the safety controls.
PlanSolution solve_joint(const VectorXd& state, const GpModel& gp,
                         const DynamicsModel& dyn, const SafeMpcConfig& cfg,
                         const PerformanceObjective& objective, std::mt19937_64& rng,
                         const std::vector<VectorXd>& warm_starts = {},
                         PerformanceModel model = {});

/// Backup controller u = sat(-K x) inside the input box.
struct SafetyController {
  MatrixXd gain;  // K (u = -K x before saturation)
  VectorXd lower;
  VectorXd upper;

  VectorXd operator()(const VectorXd& x) const {
    return (-gain * x).cwiseMax(lower).cwiseMin(upper);
  }
};

struct ControllerState {
  /// Pi_t; std::nullopt entries stand for pi_safe.
  std::vector<std::optional<FeedbackLaw>> plan;
  int time = 0;
  SafetyController safety;
  /// Decision vector of the last feasible plan, shifted at every step.
  VectorXd warm_start;
  /// Center of the terminal set of the last feasible plan.
  VectorXd tail_center;

  static ControllerState initial(int horizon, SafetyController safety);
  bool all_safe() const;
};

enum class PlanningMode { kSafety, kJoint };

struct PlanningObjective {
  PlanningMode mode = PlanningMode::kSafety;
  SafetyObjective safety;
  PerformanceObjective performance;
  PerformanceModel performance_model;  // empty: mean-equivalent propagation
};

struct StepDiagnostics {
  bool feasible = false;
  SolveStatus status = SolveStatus::kFailed;
  double objective = 0.0;
  double min_margin = 0.0;
  bool applied_safe = false;  // the applied entry was pi_safe
  double solve_seconds = 0.0;
  std::string message;
};

struct ControllerStep {
  VectorXd input;  // applied, saturated to the input box
  ControllerState next;
  StepDiagnostics diagnostics;
  PlanSolution plan;
};

ControllerStep controller_step(const ControllerState& state, const VectorXd& x,
                               const GpModel& gp, const DynamicsModel& dyn,
                               const SafeMpcConfig& cfg,
                               const PlanningObjective& objective,
                               std::mt19937_64& rng);

}  // namespace safempc
