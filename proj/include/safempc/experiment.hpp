#pragma once

// Static and dynamic safe-exploration runs on the pendulum.

#include <cstdint>
#include <string>
#include <vector>

#include "safempc/config.hpp"
#include "safempc/gp.hpp"

namespace safempc {

struct RunRecord {
  int n = 0;                        // iteration index
  double mutual_information = 0.0;  // I(Z_n) after this iteration's update
  VectorXd state;                   // x_n (static: the chosen initial state)
  VectorXd input;                   // applied u_n
  VectorXd next_state;              // noise-free successor
  bool feasible = false;
  std::string status;
  double objective = 0.0;
  double min_margin = 0.0;
  bool applied_safe = false;
  bool sampled = false;  // an observation was added to the GP
  bool safety_violation = false;
  double solve_seconds = 0.0;
};

struct RunLog {
  ExperimentKind kind = ExperimentKind::kDynamic;
  ObjectiveMode mode = ObjectiveMode::kStandard;
  int horizon = 0;
  std::uint64_t seed = 0;
  double initial_information = 0.0;  // I(Z_0)
  std::vector<RunRecord> records;
  MatrixXd inputs;        // final dataset Z
  MatrixXd observations;  // raw y

  int violations() const;
  double final_information() const {
    return records.empty() ? initial_information : records.back().mutual_information;
  }
};

/// Per-run random streams derived from the seed: initial data, observation
/// noise and solver multi-starts never share a generator.
std::mt19937_64 stream(std::uint64_t seed, std::uint64_t id);

/// Prior GP conditioned on n_0 samples (x_i, pi_safe(x_i)) with x_i uniform
/// in X_safe and noisy observed successors.
GpModel initial_model(const ExperimentConfig& cfg, const DynamicsModel& prior,
                      const SafetyController& safety, std::mt19937_64& rng);

/// GP options of the experiment with per-output noise from the pendulum.
GpOptions experiment_gp_options(const ExperimentConfig& cfg);

/// Throws ConfigError when the safe set fails the invariance check (only
/// when enabled in the config).
void check_safe_set(const ExperimentConfig& cfg, const SafetyController& safety);

RunLog run_static(const ExperimentConfig& cfg, std::uint64_t seed);
RunLog run_dynamic(const ExperimentConfig& cfg, std::uint64_t seed);
RunLog run_experiment(const ExperimentConfig& cfg, std::uint64_t seed);

}  // namespace safempc
