#include "safempc/experiment.hpp"

#include <chrono>
#include <cmath>

#include "safempc/errors.hpp"

namespace safempc {

namespace {

enum StreamId : std::uint64_t { kInitialData = 1, kNoise = 2, kSolver = 3, kValidation = 4 };

VectorXd stack(const VectorXd& x, const VectorXd& u) {
  VectorXd z(x.size() + u.size());
  z << x, u;
  return z;
}

// -sum_j sigma_j at the first plan point.
double first_point_uncertainty(const ReachSequence& reach) {
  return -reach.posteriors.front().stddev.sum();
}

// -sum_t sum_j sigma_j at every plan center.
double plan_uncertainty(const ReachSequence& reach) {
  double total = 0.0;
  for (const auto& p : reach.posteriors) total += p.stddev.sum();
  return -total;
}

PerformanceObjective performance_objective(const MatrixXd& weight) {
  return [weight](const std::vector<PerformanceState>& perf, const ReachSequence& reach) {
    double spread = 0.0;
    for (const auto& s : perf) spread += s.covariance.diagonal().cwiseMax(0.0).cwiseSqrt().sum();
    double deviation = 0.0;
    const std::size_t last = std::min(perf.size() - 1, reach.sets.size() - 1);
    for (std::size_t t = 1; t <= last; ++t) {
      const VectorXd e = perf[t].mean - reach.sets[t].center();
      deviation += e.dot(weight * e);
    }
    return -(spread - deviation);
  };
}

bool fallen(const ExperimentConfig& cfg, const VectorXd& x) {
  return !(std::abs(x(0)) < cfg.pendulum.fall_angle);
}

RunLog start_log(const ExperimentConfig& cfg, std::uint64_t seed, const GpModel& gp) {
  RunLog log;
  log.kind = cfg.kind;
  log.mode = cfg.mode;
  log.horizon = cfg.horizon;
  log.seed = seed;
  log.initial_information = mutual_information(gp, gp.inputs());
  return log;
}

void finish_log(RunLog& log, const GpModel& gp) {
  log.inputs = gp.inputs();
  log.observations = gp.observations();
}

}  // namespace

int RunLog::violations() const {
  int count = 0;
  for (const auto& r : records) count += r.safety_violation ? 1 : 0;
  return count;
}

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(id)};
  return std::mt19937_64(seq);
}

GpOptions experiment_gp_options(const ExperimentConfig& cfg) {
  GpOptions opts = cfg.gp;
  opts.noise_std = VectorXd::Constant(2, cfg.pendulum.noise_std);
  return opts;
}

GpModel initial_model(const ExperimentConfig& cfg, const DynamicsModel& prior,
                      const SafetyController& safety, std::mt19937_64& rng) {
  const auto starts =
      sample_polytope(cfg.safe_set, static_cast<std::size_t>(cfg.initial_samples), rng);
  MatrixXd inputs(cfg.initial_samples, 3);
  MatrixXd observations(cfg.initial_samples, 2);
  for (int i = 0; i < cfg.initial_samples; ++i) {
    const VectorXd& x = starts[static_cast<std::size_t>(i)];
    const VectorXd u = safety(x);
    inputs.row(i) = stack(x, u).transpose();
    observations.row(i) = true_step(cfg.pendulum, x, u, rng).observation.transpose();
  }
  return GpModel::fit(inputs, observations, prior, experiment_gp_options(cfg));
}

void check_safe_set(const ExperimentConfig& cfg, const SafetyController& safety) {
  if (!cfg.validate_safe_set) return;
  auto rng = stream(0, kValidation);
  validate_safe_set(cfg.safe_set, cfg.pendulum, safety, cfg.validation_samples,
                    cfg.validation_steps, rng);
}

RunLog run_static(const ExperimentConfig& cfg, std::uint64_t seed) {
  const DynamicsModel prior = prior_model(cfg.pendulum);
  const SafetyController safety = lqr_safe_controller(cfg.pendulum).controller;
  auto data_rng = stream(seed, kInitialData);
  auto noise_rng = stream(seed, kNoise);
  auto solver_rng = stream(seed, kSolver);
  ExperimentConfig run_cfg = cfg;
  run_cfg.kind = ExperimentKind::kStatic;
  const SafeMpcConfig mpc = run_cfg.mpc_config();

  GpModel gp = initial_model(cfg, prior, safety, data_rng);
  RunLog log = start_log(run_cfg, seed, gp);
  double information = log.initial_information;
  for (int n = 0; n < cfg.iterations; ++n) {
    const auto t0 = std::chrono::steady_clock::now();
    const PlanSolution plan =
        solve_mpc(cfg.initial_state, gp, prior, mpc, first_point_uncertainty, solver_rng);
    RunRecord rec;
    rec.n = n;
    rec.solve_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rec.feasible = plan.feasible;
    rec.status = to_string(plan.status);
    rec.objective = plan.objective;
    rec.min_margin = plan.min_margin();
    if (plan.feasible) {
      rec.state = plan.reach.sets.front().center();
      rec.input = plan.laws.front().offset;
      const Transition tr = true_step(cfg.pendulum, rec.state, rec.input, noise_rng);
      rec.next_state = tr.next;
      gp = gp.add_observation(stack(rec.state, rec.input), tr.observation);
      information = mutual_information(gp, gp.inputs());
      rec.sampled = true;
      rec.safety_violation = fallen(cfg, rec.state) || fallen(cfg, rec.next_state);
    } else {
      rec.state = VectorXd::Constant(2, std::numeric_limits<double>::quiet_NaN());
      rec.input = VectorXd::Constant(1, std::numeric_limits<double>::quiet_NaN());
      rec.next_state = rec.state;
    }
    rec.mutual_information = information;
    log.records.push_back(std::move(rec));
  }
  finish_log(log, gp);
  return log;
}

RunLog run_dynamic(const ExperimentConfig& cfg, std::uint64_t seed) {
  const DynamicsModel prior = prior_model(cfg.pendulum);
  const SafetyController safety = lqr_safe_controller(cfg.pendulum).controller;
  auto data_rng = stream(seed, kInitialData);
  auto noise_rng = stream(seed, kNoise);
  auto solver_rng = stream(seed, kSolver);
  ExperimentConfig run_cfg = cfg;
  run_cfg.kind = ExperimentKind::kDynamic;
  const SafeMpcConfig mpc = run_cfg.mpc_config();

  PlanningObjective objective;
  if (cfg.mode == ObjectiveMode::kPerformance) {
    objective.mode = PlanningMode::kJoint;
    objective.performance = performance_objective(cfg.performance_weight);
  } else {
    objective.safety = plan_uncertainty;
  }

  GpModel gp = initial_model(cfg, prior, safety, data_rng);
  RunLog log = start_log(run_cfg, seed, gp);
  ControllerState ctrl = ControllerState::initial(cfg.horizon, safety);
  VectorXd x = cfg.initial_state;
  for (int n = 0; n < cfg.iterations; ++n) {
    const ControllerStep step = controller_step(ctrl, x, gp, prior, mpc, objective, solver_rng);
    const Transition tr = true_step(cfg.pendulum, x, step.input, noise_rng);
    gp = gp.add_observation(stack(x, step.input), tr.observation);

    RunRecord rec;
    rec.n = n;
    rec.state = x;
    rec.input = step.input;
    rec.next_state = tr.next;
    rec.feasible = step.diagnostics.feasible;
    rec.status = to_string(step.diagnostics.status);
    rec.objective = step.diagnostics.objective;
    rec.min_margin = step.diagnostics.min_margin;
    rec.applied_safe = step.diagnostics.applied_safe;
    rec.sampled = true;
    rec.safety_violation = fallen(cfg, tr.next);
    rec.solve_seconds = step.diagnostics.solve_seconds;
    rec.mutual_information = mutual_information(gp, gp.inputs());
    log.records.push_back(std::move(rec));

    ctrl = step.next;
    x = tr.next;
  }
  finish_log(log, gp);
  return log;
}

RunLog run_experiment(const ExperimentConfig& cfg, std::uint64_t seed) {
  return cfg.kind == ExperimentKind::kStatic ? run_static(cfg, seed) : run_dynamic(cfg, seed);
}

}  // namespace safempc
