#include "safempc/mpc.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include "safempc/errors.hpp"
#include "safempc/lqr.hpp"

namespace safempc {

namespace {

VectorXd concat(std::initializer_list<VectorXd> parts) {
  Eigen::Index n = 0;
  for (const auto& p : parts) n += p.size();
  VectorXd out(n);
  Eigen::Index k = 0;
  for (const auto& p : parts) {
    out.segment(k, p.size()) = p;
    k += p.size();
  }
  return out;
}

VectorXd bound_vector(const VectorXd& per_step, int steps) {
  VectorXd out(per_step.size() * steps);
  for (int t = 0; t < steps; ++t) out.segment(t * per_step.size(), per_step.size()) = per_step;
  return out;
}

}  // namespace

void SafeMpcConfig::validate(Eigen::Index state_dim, Eigen::Index input_dim) const {
  if (horizon < 1) throw ConfigError("mpc: horizon T must be >= 1");
  if (performance_horizon < 1) throw ConfigError("mpc: performance horizon H must be >= 1");
  if (shared_controls < 1 || shared_controls > std::min(horizon, performance_horizon)) {
    throw ConfigError("mpc: shared controls r must lie in {1, ..., min(T, H)}");
  }
  if (state_constraints.dim() != state_dim || safe_set.dim() != state_dim) {
    throw ConfigError("mpc: state polytopes must have dimension " + std::to_string(state_dim));
  }
  if (input_constraints.dim() != input_dim) {
    throw ConfigError("mpc: input polytope must have dimension " + std::to_string(input_dim));
  }
  state_constraints.validate_compact("state constraints X");
  input_constraints.validate_compact("input constraints U");
  safe_set.validate_compact("safe set X_safe");
  if (!safe_set.is_subset_of(state_constraints)) {
    throw ConfigError("mpc: safe set X_safe is not contained in X");
  }
  if (gain_policy == GainPolicy::kLqr &&
      (lqr_state_weight.rows() != state_dim || lqr_state_weight.cols() != state_dim ||
       lqr_input_weight.rows() != input_dim || lqr_input_weight.cols() != input_dim)) {
    throw ConfigError("mpc: LQR weights have the wrong dimensions");
  }
  if (optimize_initial_state &&
      (initial_state_lower.size() != state_dim || initial_state_upper.size() != state_dim ||
       !(initial_state_upper.array() >= initial_state_lower.array()).all())) {
    throw ConfigError("mpc: invalid initial-state box");
  }
  if (!(margin_tolerance >= 0.0)) throw ConfigError("mpc: negative margin tolerance");
}

PerformanceState mean_equivalent_step(const PerformanceState& state,
                                      const VectorXd& input, const GpModel& gp,
                                      const DynamicsModel& dyn) {
  VectorXd z(state.mean.size() + input.size());
  z << state.mean, input;
  const Posterior post = gp.posterior(z);
  return {dyn(state.mean, input) + post.mean,
          post.stddev.array().square().matrix().asDiagonal()};
}

VectorXd control_constraint_residuals(const FeedbackLaw& law, const Ellipsoidd& set,
                                      const Polytoped& inputs) {
  const Ellipsoidd image =
      affine_transform(law.gain, law.offset - law.gain * law.center, set);
  return ellipsoid_in_polytope(image, inputs).margins;
}

PlanEvaluator::PlanEvaluator(const VectorXd& state, const GpModel& gp,
                             const DynamicsModel& dyn, const SafeMpcConfig& cfg,
                             double beta, bool joint, PerformanceModel perf_model)
    : state_(state),
      gp_(gp),
      dyn_(dyn),
      cfg_(cfg),
      beta_(beta),
      joint_(joint),
      perf_model_(std::move(perf_model)) {
  const auto nu = dyn.input_dim;
  const auto [ulo, uhi] = cfg.input_constraints.bounding_box();
  VectorXd lo = bound_vector(ulo, cfg.horizon);
  VectorXd hi = bound_vector(uhi, cfg.horizon);
  if (cfg.optimize_initial_state) {
    x0_offset_ = lo.size();
    lo = concat({lo, cfg.initial_state_lower});
    hi = concat({hi, cfg.initial_state_upper});
  }
  if (joint) {
    perf_offset_ = lo.size();
    const int free = cfg.performance_horizon - cfg.shared_controls;
    lo = concat({lo, bound_vector(ulo, free)});
    hi = concat({hi, bound_vector(uhi, free)});
    if (!perf_model_) {
      perf_model_ = [&gp, &dyn](const PerformanceState& s, const VectorXd& u) {
        return mean_equivalent_step(s, u, gp, dyn);
      };
    }
  }
  lower_ = std::move(lo);
  upper_ = std::move(hi);
  (void)nu;
}

MatrixXd PlanEvaluator::feedback_gain(const VectorXd& center, const VectorXd& input) const {
  const auto nx = dyn_.state_dim;
  const auto nu = dyn_.input_dim;
  if (cfg_.gain_policy == GainPolicy::kZero) return MatrixXd::Zero(nu, nx);
  const MatrixXd jac = dyn_.jacobian_at(center, input);
  MatrixXd a = jac.leftCols(nx);
  MatrixXd b = jac.rightCols(nu);
  if (gain_key_ && gain_key_->first == a && gain_key_->second == b) return gain_value_;
  gain_value_ = -dlqr(a, b, cfg_.lqr_state_weight, cfg_.lqr_input_weight).gain;
  gain_key_ = std::make_pair(std::move(a), std::move(b));
  return gain_value_;
}

PlanEvaluation PlanEvaluator::evaluate(const VectorXd& decisions) const {
  const auto nx = dyn_.state_dim;
  const auto nu = dyn_.input_dim;
  const int horizon = cfg_.horizon;
  const VectorXd x0 = x0_offset_ >= 0 ? VectorXd(decisions.segment(x0_offset_, nx)) : state_;

  PlanEvaluation out;
  ReachSequence& reach = out.reach;
  reach.beta = beta_;
  reach.sets.reserve(static_cast<std::size_t>(horizon) + 1);
  reach.sets.push_back(Ellipsoidd::point(x0));
  for (int t = 0; t < horizon; ++t) {
    const VectorXd u = decisions.segment(t * nu, nu);
    const VectorXd& p = reach.sets.back().center();
    FeedbackLaw law{feedback_gain(p, u), u, p};
    StepResult step = propagate_step(reach.sets.back(), law, gp_, dyn_, beta_, cfg_.tie_break);
    reach.laws.push_back(std::move(law));
    reach.posteriors.push_back(std::move(step.posterior));
    reach.sets.push_back(std::move(step.next));
  }

  const auto mu = cfg_.input_constraints.num_rows();
  const auto mx = cfg_.state_constraints.num_rows();
  const auto ms = cfg_.safe_set.num_rows();
  const Eigen::Index total = horizon * mu + (horizon - 1) * mx + ms +
                             (x0_offset_ >= 0 ? mx : 0);
  out.margins.resize(total);
  Eigen::Index k = 0;
  for (int t = 0; t < horizon; ++t) {
    out.margins.segment(k, mu) = control_constraint_residuals(
        reach.laws[static_cast<std::size_t>(t)], reach.sets[static_cast<std::size_t>(t)],
        cfg_.input_constraints);
    k += mu;
  }
  for (int t = 1; t < horizon; ++t) {
    out.margins.segment(k, mx) =
        ellipsoid_in_polytope(reach.sets[static_cast<std::size_t>(t)], cfg_.state_constraints)
            .margins;
    k += mx;
  }
  out.margins.segment(k, ms) = ellipsoid_in_polytope(reach.sets.back(), cfg_.safe_set).margins;
  k += ms;
  if (x0_offset_ >= 0) out.margins.segment(k, mx) = cfg_.state_constraints.margins(x0);

  if (joint_) {
    out.performance.reserve(static_cast<std::size_t>(cfg_.performance_horizon) + 1);
    out.performance.push_back({x0, MatrixXd::Zero(nx, nx)});
    for (int t = 0; t < cfg_.performance_horizon; ++t) {
      const VectorXd u = t < cfg_.shared_controls
                             ? VectorXd(decisions.segment(t * nu, nu))
                             : VectorXd(decisions.segment(
                                   perf_offset_ + (t - cfg_.shared_controls) * nu, nu));
      out.performance.push_back(perf_model_(out.performance.back(), u));
    }
  }
  return out;
}

namespace {

template <typename ObjectiveFn>
PlanSolution solve_plan(const VectorXd& state, const GpModel& gp, const DynamicsModel& dyn,
                        const SafeMpcConfig& cfg, bool joint, PerformanceModel model,
                        const ObjectiveFn& objective, std::mt19937_64& rng,
                        const std::vector<VectorXd>& warm_starts) {
  PlanSolution sol;
  try {
    const double b = beta(gp);
    const PlanEvaluator evaluator(state, gp, dyn, cfg, b, joint, std::move(model));
    NlpProblem problem;
    problem.lower = evaluator.lower();
    problem.upper = evaluator.upper();
    for (const auto& w : warm_starts) {
      if (w.size() == evaluator.num_decisions()) problem.initial_guesses.push_back(w);
    }
    problem.evaluate = [&](const VectorXd& x) -> NlpEvaluation {
      try {
        PlanEvaluation ev = evaluator.evaluate(x);
        return {objective(ev), std::move(ev.margins)};
      } catch (const std::exception&) {
        return {std::numeric_limits<double>::quiet_NaN(), VectorXd()};
      }
    };
    const SolveResult res = solve(problem, cfg.solver, rng);
    sol.status = res.status;
    sol.diagnostic = res.diagnostic;
    if (res.status == SolveStatus::kFailed) return sol;
    PlanEvaluation ev = evaluator.evaluate(res.decisions);
    sol.objective = objective(ev);
    sol.decisions = res.decisions;
    sol.reach = std::move(ev.reach);
    sol.laws = sol.reach.laws;
    sol.margins = std::move(ev.margins);
    sol.performance = std::move(ev.performance);
    sol.feasible = res.feasible() && sol.min_margin() >= -cfg.margin_tolerance;
  } catch (const std::exception& e) {
    sol.feasible = false;
    sol.status = SolveStatus::kFailed;
    sol.diagnostic = e.what();
  }
  return sol;
}

}  // namespace

PlanSolution solve_mpc(const VectorXd& state, const GpModel& gp, const DynamicsModel& dyn,
                       const SafeMpcConfig& cfg, const SafetyObjective& objective,
                       std::mt19937_64& rng, const std::vector<VectorXd>& warm_starts) {
  return solve_plan(
      state, gp, dyn, cfg, false, {},
      [&](const PlanEvaluation& ev) { return objective(ev.reach); }, rng, warm_starts);
}

PlanSolution solve_joint(const VectorXd& state, const GpModel& gp, const DynamicsModel& dyn,
                         const SafeMpcConfig& cfg, const PerformanceObjective& objective,
                         std::mt19937_64& rng, const std::vector<VectorXd>& warm_starts,
                         PerformanceModel model) {
  return solve_plan(
      state, gp, dyn, cfg, true, std::move(model),
      [&](const PlanEvaluation& ev) { return objective(ev.performance, ev.reach); }, rng,
      warm_starts);
}

ControllerState ControllerState::initial(int horizon, SafetyController safety) {
  ControllerState s;
  s.plan.assign(static_cast<std::size_t>(horizon), std::nullopt);
  s.safety = std::move(safety);
  return s;
}

bool ControllerState::all_safe() const {
  for (const auto& e : plan) {
    if (e) return false;
  }
  return true;
}

namespace {

// Shift the control block by one step, appending pi_safe at the terminal
// center; shift the free performance controls likewise.
VectorXd shift_decisions(const VectorXd& decisions, const SafeMpcConfig& cfg,
                         Eigen::Index nu, const VectorXd& tail_input, bool joint) {
  VectorXd out = decisions;
  const int horizon = cfg.horizon;
  for (int t = 0; t + 1 < horizon; ++t) out.segment(t * nu, nu) = decisions.segment((t + 1) * nu, nu);
  out.segment((horizon - 1) * nu, nu) = tail_input;
  if (joint) {
    const Eigen::Index off = horizon * nu;
    const int free = cfg.performance_horizon - cfg.shared_controls;
    for (int t = 0; t + 1 < free; ++t) {
      out.segment(off + t * nu, nu) = decisions.segment(off + (t + 1) * nu, nu);
    }
  }
  return out;
}

}  // namespace

ControllerStep controller_step(const ControllerState& state, const VectorXd& x,
                               const GpModel& gp, const DynamicsModel& dyn,
                               const SafeMpcConfig& cfg, const PlanningObjective& objective,
                               std::mt19937_64& rng) {
  const auto nu = dyn.input_dim;
  const bool joint = objective.mode == PlanningMode::kJoint;
  ControllerStep out;
  out.next = state;
  out.next.time = state.time + 1;

  std::vector<VectorXd> guesses;
  if (state.warm_start.size() > 0) guesses.push_back(state.warm_start);
  {
    const VectorXd u_safe = state.safety(x);
    const Eigen::Index n = cfg.horizon * nu +
                           (joint ? (cfg.performance_horizon - cfg.shared_controls) * nu : 0);
    VectorXd g(n);
    for (Eigen::Index k = 0; k < n / nu; ++k) g.segment(k * nu, nu) = u_safe;
    guesses.push_back(std::move(g));
  }

  const auto t0 = std::chrono::steady_clock::now();
  out.plan = joint ? solve_joint(x, gp, dyn, cfg, objective.performance, rng, guesses,
                                 objective.performance_model)
                   : solve_mpc(x, gp, dyn, cfg, objective.safety, rng, guesses);
  out.diagnostics.solve_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  ControllerState& next = out.next;
  if (out.plan.feasible) {
    next.plan.assign(out.plan.laws.begin(), out.plan.laws.end());
    next.tail_center = out.plan.reach.sets.back().center();
    next.warm_start = shift_decisions(out.plan.decisions, cfg, nu,
                                      state.safety(next.tail_center), joint);
  } else {
    for (std::size_t k = 0; k + 1 < next.plan.size(); ++k) next.plan[k] = state.plan[k + 1];
    next.plan.back() = std::nullopt;
    if (next.warm_start.size() > 0) {
      next.warm_start = shift_decisions(next.warm_start, cfg, nu,
                                        state.safety(next.tail_center.size() ? next.tail_center : x),
                                        joint);
    }
  }

  const auto& entry = next.plan.front();
  const VectorXd raw = entry ? (*entry)(x) : state.safety(x);
  out.input = raw.cwiseMax(state.safety.lower).cwiseMin(state.safety.upper);

  out.diagnostics.feasible = out.plan.feasible;
  out.diagnostics.status = out.plan.status;
  out.diagnostics.objective = out.plan.objective;
  out.diagnostics.min_margin = out.plan.min_margin();
  out.diagnostics.applied_safe = !entry.has_value();
  out.diagnostics.message = out.plan.diagnostic;
  return out;
}

}  // namespace safempc
