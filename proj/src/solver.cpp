#include "safempc/solver.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <sstream>

namespace safempc {

namespace {

struct NonFinite {
  VectorXd at;
};

double max_violation(const VectorXd& margins) {
  if (margins.size() == 0) return 0.0;
  return std::max(0.0, -margins.minCoeff());
}

VectorXd project(const VectorXd& x, const NlpProblem& p) {
  return x.cwiseMax(p.lower).cwiseMin(p.upper);
}

std::string format_vector(const VectorXd& v) {
  std::ostringstream os;
  os.precision(17);
  os << "[";
  for (Eigen::Index i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v(i);
  os << "]";
  return os.str();
}

class LocalSolver {
 public:
  LocalSolver(const NlpProblem& problem, const SolverSettings& settings)
      : problem_(problem), settings_(settings) {}

  SolveResult run(const VectorXd& start) {
    SolveResult res;
    VectorXd x = project(start, problem_);
    NlpEvaluation ev = eval(x);
    const auto m = ev.margins.size();
    VectorXd lambda = VectorXd::Zero(m);
    double rho = settings_.initial_penalty;
    double prev_violation = max_violation(ev.margins);
    bool kkt = false;

    for (int outer = 0; outer < settings_.max_outer_iterations; ++outer) {
      auto merit = [&](const VectorXd& z) {
        const NlpEvaluation e = eval(z);
        const VectorXd shifted = (lambda - rho * e.margins).cwiseMax(0.0);
        return e.objective +
               (shifted.squaredNorm() - lambda.squaredNorm()) / (2.0 * rho);
      };
      const bool inner_converged = minimize_box(merit, x);
      ev = eval(x);
      const double violation = max_violation(ev.margins);
      const VectorXd next_lambda = (lambda - rho * ev.margins).cwiseMax(0.0);
      const double multiplier_change =
          m ? (next_lambda - lambda).cwiseAbs().maxCoeff() : 0.0;
      lambda = next_lambda;
      if (violation <= settings_.constraint_tolerance && inner_converged &&
          multiplier_change <= settings_.optimality_tolerance * std::max(1.0, rho)) {
        kkt = true;
        break;
      }
      if (violation > 0.25 * prev_violation &&
          violation > settings_.constraint_tolerance) {
        rho = std::min(settings_.max_penalty, rho * settings_.penalty_growth);
      }
      prev_violation = violation;
    }

    res.decisions = x;
    res.objective = ev.objective;
    res.margins = ev.margins;
    res.multipliers = lambda;
    res.penalty = rho;
    res.evaluations = evaluations_;
    if (max_violation(ev.margins) <= settings_.constraint_tolerance) {
      res.status = kkt ? SolveStatus::kOptimal : SolveStatus::kFeasible;
    } else {
      res.status = SolveStatus::kInfeasible;
    }
    return res;
  }

 private:
  NlpEvaluation eval(const VectorXd& x) {
    ++evaluations_;
    NlpEvaluation e = problem_.evaluate(x);
    if (!std::isfinite(e.objective) || !e.margins.allFinite()) throw NonFinite{x};
    return e;
  }

  VectorXd gradient(const std::function<double(const VectorXd&)>& f, const VectorXd& x) {
    return finite_diff_gradient(f, x, settings_);
  }

  VectorXd projected_gradient(const VectorXd& x, const VectorXd& g) const {
    VectorXd pg = g;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if ((x(i) <= problem_.lower(i) && g(i) > 0.0) ||
          (x(i) >= problem_.upper(i) && g(i) < 0.0)) {
        pg(i) = 0.0;
      }
    }
    return pg;
  }

  // Box-projected L-BFGS; returns true on a small projected gradient.
  bool minimize_box(const std::function<double(const VectorXd&)>& f, VectorXd& x) {
    const auto n = x.size();
    if (n == 0) return true;
    std::deque<std::pair<VectorXd, VectorXd>> memory;
    double fx = f(x);
    VectorXd g = gradient(f, x);
    const double width = (problem_.upper - problem_.lower).minCoeff();
    for (int it = 0; it < settings_.max_inner_iterations; ++it) {
      const VectorXd pg = projected_gradient(x, g);
      if (pg.cwiseAbs().maxCoeff() <= settings_.optimality_tolerance) return true;

      VectorXd d = -two_loop(memory, pg);
      for (Eigen::Index i = 0; i < n; ++i) {
        if (pg(i) == 0.0) d(i) = 0.0;
      }
      double slope = pg.dot(d);
      if (!(slope < 0.0)) {
        memory.clear();
        d = -pg;
        slope = -pg.squaredNorm();
      }
      double alpha = 1.0;
      if (memory.empty()) {
        const double dmax = d.cwiseAbs().maxCoeff();
        if (dmax > 0.0 && std::isfinite(width)) alpha = std::min(1.0, 0.25 * width / dmax);
      }
      bool accepted = false;
      VectorXd x_new;
      double f_new = fx;
      for (int ls = 0; ls < 40; ++ls) {
        x_new = project(x + alpha * d, problem_);
        f_new = f(x_new);
        if (f_new <= fx + 1e-4 * g.dot(x_new - x)) {
          accepted = true;
          break;
        }
        alpha *= 0.5;
      }
      if (!accepted || (x_new - x).cwiseAbs().maxCoeff() == 0.0) {
        if (!memory.empty()) {
          memory.clear();
          continue;
        }
        return false;
      }
      const VectorXd g_new = gradient(f, x_new);
      const VectorXd s = x_new - x;
      const VectorXd y = g_new - g;
      if (s.dot(y) > 1e-12 * s.norm() * y.norm()) {
        memory.emplace_back(s, y);
        if (static_cast<int>(memory.size()) > settings_.lbfgs_memory) memory.pop_front();
      }
      const double decrease = fx - f_new;
      x = x_new;
      fx = f_new;
      g = g_new;
      if (decrease <= 1e-15 * std::max(1.0, std::abs(fx)) &&
          s.cwiseAbs().maxCoeff() <= 1e-12) {
        break;
      }
    }
    return projected_gradient(x, g).cwiseAbs().maxCoeff() <= settings_.optimality_tolerance;
  }

  static VectorXd two_loop(const std::deque<std::pair<VectorXd, VectorXd>>& memory,
                           const VectorXd& g) {
    VectorXd q = g;
    std::vector<double> alpha(memory.size());
    for (std::size_t k = memory.size(); k-- > 0;) {
      const auto& [s, y] = memory[k];
      alpha[k] = s.dot(q) / y.dot(s);
      q -= alpha[k] * y;
    }
    if (!memory.empty()) {
      const auto& [s, y] = memory.back();
      q *= s.dot(y) / y.squaredNorm();
    }
    for (std::size_t k = 0; k < memory.size(); ++k) {
      const auto& [s, y] = memory[k];
      const double b = y.dot(q) / y.dot(s);
      q += (alpha[k] - b) * s;
    }
    return q;
  }

  const NlpProblem& problem_;
  const SolverSettings& settings_;
  int evaluations_ = 0;
};

bool better(const SolveResult& a, const SolveResult& b) {
  // Strict preference of a over b; equal candidates keep the earlier start.
  if (a.feasible() != b.feasible()) return a.feasible();
  if (a.feasible()) return a.objective < b.objective;
  return max_violation(a.margins) < max_violation(b.margins);
}

}  // namespace

const char* to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::kOptimal: return "optimal";
    case SolveStatus::kFeasible: return "feasible";
    case SolveStatus::kInfeasible: return "infeasible";
    case SolveStatus::kFailed: return "failed";
  }
  return "unknown";
}

VectorXd finite_diff_gradient(const std::function<double(const VectorXd&)>& f,
                              const VectorXd& x, const SolverSettings& settings) {
  VectorXd g(x.size());
  VectorXd xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = settings.fd_step * std::max(1.0, std::abs(x(i)));
    xp(i) = x(i) + h;
    const double fp = f(xp);
    xp(i) = x(i) - h;
    const double fm = f(xp);
    xp(i) = x(i);
    g(i) = (fp - fm) / (2.0 * h);
  }
  return g;
}

SolveResult solve_from(const NlpProblem& problem, const SolverSettings& settings,
                       const VectorXd& start) {
  try {
    return LocalSolver(problem, settings).run(start);
  } catch (const NonFinite& bad) {
    SolveResult res;
    res.status = SolveStatus::kFailed;
    res.decisions = bad.at;
    res.diagnostic = "non-finite objective or constraint at " + format_vector(bad.at);
    return res;
  }
}

SolveResult solve(const NlpProblem& problem, const SolverSettings& settings,
                  std::mt19937_64& rng) {
  const auto n = problem.num_decisions();
  if (problem.upper.size() != n || !(problem.upper.array() >= problem.lower.array()).all()) {
    SolveResult res;
    res.diagnostic = "inconsistent decision bounds";
    return res;
  }
  const int total = std::max<int>(settings.multi_start,
                                  static_cast<int>(problem.initial_guesses.size()));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  SolveResult best;
  bool have_best = false;
  std::string failures;
  for (int k = 0; k < total; ++k) {
    VectorXd start(n);
    if (k < static_cast<int>(problem.initial_guesses.size())) {
      start = problem.initial_guesses[static_cast<std::size_t>(k)];
    } else {
      for (Eigen::Index i = 0; i < n; ++i) {
        start(i) = problem.lower(i) + unif(rng) * (problem.upper(i) - problem.lower(i));
      }
    }
    SolveResult res = solve_from(problem, settings, start);
    res.start_index = k;
    if (res.status == SolveStatus::kFailed) {
      if (failures.empty()) failures = res.diagnostic;
      continue;
    }
    if (!have_best || better(res, best)) {
      best = std::move(res);
      have_best = true;
    }
  }
  if (!have_best) {
    SolveResult res;
    res.status = SolveStatus::kFailed;
    res.diagnostic = failures;
    return res;
  }
  return best;
}

}  // namespace safempc
