#pragma once

// Smooth inequality-constrained NLP solver: augmented Lagrangian outer loop,
// box-projected L-BFGS inner loop, central finite-difference gradients and
// deterministic multi-start.

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace safempc {

using Eigen::VectorXd;

/// Objective and inequality margins c(x) >= 0 from one evaluation.
struct NlpEvaluation {
  double objective = 0.0;
  VectorXd margins;
};

struct NlpProblem {
  std::function<NlpEvaluation(const VectorXd&)> evaluate;
  VectorXd lower;
  VectorXd upper;
  /// Extra deterministic starts tried before the random ones (warm starts).
  std::vector<VectorXd> initial_guesses;

  Eigen::Index num_decisions() const { return lower.size(); }
};

struct SolverSettings {
  int max_outer_iterations = 12;
  int max_inner_iterations = 60;
  double constraint_tolerance = 1e-6;
  double optimality_tolerance = 1e-5;
  double fd_step = 1e-6;
  double penalty_growth = 10.0;
  double initial_penalty = 10.0;
  double max_penalty = 1e8;
  int lbfgs_memory = 8;
  /// Total number of starts, including initial_guesses.
  int multi_start = 25;
};

enum class SolveStatus { kOptimal, kFeasible, kInfeasible, kFailed };

const char* to_string(SolveStatus status);

struct SolveResult {
  SolveStatus status = SolveStatus::kFailed;
  VectorXd decisions;
  VectorXd multipliers;
  VectorXd margins;
  double objective = 0.0;
  double penalty = 0.0;
  int start_index = -1;
  int evaluations = 0;
  std::string diagnostic;

  bool feasible() const {
    return status == SolveStatus::kOptimal || status == SolveStatus::kFeasible;
  }
};

/// Central differences with step fd_step * max(1, |x_i|).
VectorXd finite_diff_gradient(const std::function<double(const VectorXd&)>& f,
                              const VectorXd& x, const SolverSettings& settings);

/// One local solve from `start` (projected onto the box).
SolveResult solve_from(const NlpProblem& problem, const SolverSettings& settings,
                       const VectorXd& start);

/// Multi-start solve. Starts are problem.initial_guesses followed by uniform
/// draws over the box; the winner is the feasible start with the lowest
/// objective (ties to the lowest start index), otherwise the least violated.
SolveResult solve(const NlpProblem& problem, const SolverSettings& settings,
                  std::mt19937_64& rng);

}  // namespace safempc
