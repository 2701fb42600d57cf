#pragma once

// Experiment configuration: one JSON document with nested sections. Every
// section is optional and falls back to the documented defaults; unknown
// keys anywhere are rejected. Schema: docs/config.md.

#include <filesystem>
#include <string>

#include "safempc/gp.hpp"
#include "safempc/mpc.hpp"
#include "safempc/pendulum.hpp"
#include "safempc/polytope.hpp"
#include "safempc/solver.hpp"

namespace safempc {

enum class ExperimentKind { kStatic, kDynamic };
enum class ObjectiveMode { kStandard, kPerformance };

const char* to_string(ExperimentKind kind);
const char* to_string(ObjectiveMode mode);

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::kDynamic;
  ObjectiveMode mode = ObjectiveMode::kStandard;
  int iterations = 200;
  int horizon = 4;              // T
  int performance_horizon = 5;  // H
  int shared_controls = 1;      // r
  int initial_samples = 25;     // n_0, drawn in X_safe under pi_safe
  VectorXd initial_state = VectorXd::Zero(2);  // dynamic start, inside X_safe
  MatrixXd performance_weight = MatrixXd::Identity(2, 2);  // Q_perf
  int static_multi_start = 25;
  int dynamic_multi_start = 2;
  GainPolicy gain_policy = GainPolicy::kLqr;

  PendulumParams pendulum;
  VectorXd state_lower, state_upper;  // X as a box
  Polytoped safe_set;
  int validation_samples = 1000;
  int validation_steps = 500;
  bool validate_safe_set = true;

  GpOptions gp;  // noise levels follow the pendulum observation noise
  SolverSettings solver;

  /// Cross-field checks; throws ConfigError.
  void validate() const;
  /// MPC block for this experiment (kind decides whether x_0 is free).
  SafeMpcConfig mpc_config() const;
};

/// Built-in defaults (identical to configs/default.json).
ExperimentConfig default_config();

/// Defaults overridden by the JSON text; throws ConfigError on malformed
/// input, unknown keys, wrong types or failed validation.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// The effective configuration as JSON (round-trips through parse_config).
std::string dump_config(const ExperimentConfig& cfg);

}  // namespace safempc
