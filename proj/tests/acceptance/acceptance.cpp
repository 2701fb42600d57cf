// Acceptance suite: one PASS/FAIL line per criterion, with measured values.
//   acceptance --criterion N    (N = 1..9)
// Exit status 0 when the criterion passes, 1 otherwise.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <Eigen/QR>

#include "CLI11.hpp"

#include "safempc/config.hpp"
#include "safempc/ellipsoid.hpp"
#include "safempc/errors.hpp"
#include "safempc/experiment.hpp"
#include "safempc/gp.hpp"
#include "safempc/lqr.hpp"
#include "safempc/mpc.hpp"
#include "safempc/outputs.hpp"
#include "safempc/pendulum.hpp"
#include "safempc/propagation.hpp"
#include "safempc/solver.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace safempc;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

std::string sci(double v) { return fmt("%.3g", v); }

void add(std::string& detail, const std::string& text) {
  if (!detail.empty()) detail += "; ";
  detail += text;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Pointwise median of equal-length curves.
std::vector<double> median_curve(const std::vector<std::vector<double>>& curves) {
  std::vector<double> out(curves.front().size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::vector<double> column;
    for (const auto& c : curves) column.push_back(c[i]);
    out[i] = median(column);
  }
  return out;
}

// (x - p)^T Q^{-1} (x - p) with one factorization per ellipsoid.
class QuadraticForm {
 public:
  QuadraticForm(const VectorXd& p, const MatrixXd& q) : p_(p), ldlt_(q) {}
  double operator()(const VectorXd& x) const {
    const VectorXd d = x - p_;
    return d.dot(ldlt_.solve(d));
  }

 private:
  VectorXd p_;
  Eigen::LDLT<MatrixXd> ldlt_;
};

MatrixXd well_conditioned(Eigen::Index n, std::mt19937_64& rng) {
  const Eigen::HouseholderQR<MatrixXd> q1(oracle::random_matrix(n, n, rng));
  const Eigen::HouseholderQR<MatrixXd> q2(oracle::random_matrix(n, n, rng));
  std::uniform_real_distribution<double> s(0.5, 2.0);
  VectorXd sv(n);
  for (Eigen::Index i = 0; i < n; ++i) sv(i) = s(rng);
  return MatrixXd(q1.householderQ()) * sv.asDiagonal() * MatrixXd(q2.householderQ());
}

// ---------------------------------------------------------------------------

Outcome ellipsoid_algebra() {
  constexpr int kInstances = 100;
  constexpr std::size_t kSamples = 10000;
  constexpr double kTol = 1e-9;
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> unit(-1.0, 1.0), width(0.01, 2.0), slack(0.95, 2.0);
  long affine = 0, minkowski = 0, rect = 0, poly = 0;
  int poly_inside = 0;

  for (int i = 0; i < kInstances; ++i) {
    const Eigen::Index n = 2 + i % 3;

    {
      const VectorXd p = oracle::random_vector(n, rng);
      const MatrixXd q = oracle::random_spd(n, rng);
      const MatrixXd a = well_conditioned(n, rng);
      const VectorXd b = oracle::random_vector(n, rng);
      const auto out = affine_transform(a, b, Ellipsoidd(p, q));
      const QuadraticForm form(out.center(), out.shape());
      for (const auto& x : oracle::ellipsoid_points(p, q, kSamples, rng)) {
        affine += form(a * x + b) > 1.0 + kTol;
      }
    }

    {
      const VectorXd p1 = oracle::random_vector(n, rng), p2 = oracle::random_vector(n, rng);
      const MatrixXd q1 = oracle::random_spd(n, rng), q2 = oracle::random_spd(n, rng);
      const auto out = minkowski_sum_outer(Ellipsoidd(p1, q1), Ellipsoidd(p2, q2));
      const QuadraticForm form(out.center(), out.shape());
      const auto xs = oracle::ellipsoid_points(p1, q1, kSamples, rng);
      const auto ys = oracle::ellipsoid_points(p2, q2, kSamples, rng);
      for (std::size_t k = 0; k < kSamples; ++k) minkowski += form(xs[k] + ys[k]) > 1.0 + kTol;
    }

    {
      const VectorXd c = oracle::random_vector(n, rng);
      VectorXd half(n);
      for (Eigen::Index j = 0; j < n; ++j) half(j) = width(rng);
      const auto e = rect_to_ellipsoid(HyperRectangled(c, half));
      const QuadraticForm form(e.center(), e.shape());
      for (int corner = 0; corner < (1 << n); ++corner) {
        VectorXd x = c;
        for (Eigen::Index j = 0; j < n; ++j) x(j) += ((corner >> j) & 1 ? 1.0 : -1.0) * half(j);
        rect += form(x) > 1.0 + kTol;
      }
      for (std::size_t k = 0; k < kSamples; ++k) {
        VectorXd x = c;
        for (Eigen::Index j = 0; j < n; ++j) x(j) += half(j) * unit(rng);
        rect += form(x) > 1.0 + kTol;
      }
    }

    {
      const VectorXd p = oracle::random_vector(n, rng, 0.3);
      const MatrixXd q = oracle::random_spd(n, rng, 0.05, 1.0);
      const Eigen::Index m = 2 * n + 2;
      MatrixXd h = oracle::random_matrix(m, n, rng);
      h.rowwise().normalize();
      VectorXd off(m);
      for (Eigen::Index r = 0; r < m; ++r) {
        const VectorXd row = h.row(r).transpose();
        // Support value scaled so that roughly half the instances fit.
        off(r) = row.dot(p) + std::sqrt(row.dot(q * row)) * slack(rng);
      }
      const Polytoped polytope(h, off);
      if (!ellipsoid_in_polytope(Ellipsoidd(p, q), polytope).inside) continue;
      ++poly_inside;
      for (const auto& x : oracle::ellipsoid_points(p, q, kSamples, rng)) {
        poly += !polytope.contains(x, kTol);
      }
    }
  }

  Outcome out;
  out.pass = affine == 0 && minkowski == 0 && rect == 0 && poly == 0 && poly_inside > 0;
  add(out.detail, "violations: affine " + std::to_string(affine) + ", minkowski " +
                      std::to_string(minkowski) + ", rectangle " + std::to_string(rect) +
                      ", polytope " + std::to_string(poly));
  add(out.detail, "polytope instances certified inside " + std::to_string(poly_inside) + "/" +
                      std::to_string(kInstances));
  return out;
}

// ---------------------------------------------------------------------------

Outcome weighted_norm() {
  std::mt19937_64 rng(202);
  double worst = 0.0, over = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Eigen::Index n = 2 + i % 2;
    const MatrixXd q = oracle::random_spd(n, rng, 0.01, 2.0);
    MatrixXd s(n + 1, n);
    s << MatrixXd::Identity(n, n), oracle::random_matrix(1, n, rng);
    const double exact = max_weighted_norm(q, s);
    const double sampled = oracle::sampled_weighted_norm(q, s, 100000, rng);
    worst = std::max(worst, std::abs(exact - sampled) / exact);
    over = std::max(over, sampled / exact - 1.0);
  }
  Outcome out;
  out.pass = worst <= 1e-3 && over <= 1e-12;
  add(out.detail, "max relative gap to boundary sampling " + sci(worst) + " (limit 1e-3)");
  add(out.detail, "max sampled excess " + sci(std::max(over, 0.0)));
  return out;
}

// ---------------------------------------------------------------------------

Outcome gp_correctness() {
  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> ls(0.3, 1.5), sv(0.5, 2.0), lv(0.0, 0.5),
      noise(0.05, 0.3);
  MatrixXd a(2, 2), b(2, 1);
  a << 1.0, 0.05, 0.25, 1.0;
  b << 0.005, 0.1;
  const DynamicsModel linear = linear_dynamics(a, b);

  double dense_err = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Eigen::Index n = 2 + (198 * i) / 99;
    const double l = ls(rng), s = sv(rng), lin = i % 3 == 0 ? 0.0 : lv(rng), e = noise(rng);
    const auto opts = fixture::options(3, 2, l, s, lin, e);
    const DynamicsModel prior = i % 2 == 0 ? fixture::zero_prior(2, 1) : linear;
    const MatrixXd z = fixture::uniform_rows(n, 3, 1.5, rng);
    const MatrixXd y = oracle::random_matrix(n, 2, rng);
    const MatrixXd test = fixture::uniform_rows(50, 3, 2.0, rng);
    const GpModel gp = GpModel::fit(z, y, prior, opts);
    for (Eigen::Index j = 0; j < 2; ++j) {
      VectorXd target(n);
      for (Eigen::Index r = 0; r < n; ++r) {
        const VectorXd zr = z.row(r).transpose();
        target(r) = y(r, j) - prior(zr.head(2), zr.tail(1))(j);
      }
      const auto dense = oracle::dense_posterior(z, target, test, opts.kernels[0].lengthscales,
                                                 s, lin, e);
      for (Eigen::Index t = 0; t < test.rows(); ++t) {
        const auto post = gp.posterior(test.row(t).transpose());
        dense_err = std::max(dense_err, std::abs(post.mean(j) - dense.mean(t)));
        dense_err =
            std::max(dense_err, std::abs(post.stddev(j) * post.stddev(j) - dense.variance(t)));
      }
    }
  }

  double incremental_err = 0.0;
  for (int i = 0; i < 10; ++i) {
    const auto opts = fixture::options(3, 2, ls(rng), sv(rng), lv(rng), noise(rng));
    const MatrixXd z = fixture::uniform_rows(200, 3, 1.5, rng);
    const MatrixXd y = oracle::random_matrix(200, 2, rng);
    GpModel gp = GpModel::fit(z.topRows(5), y.topRows(5), linear, opts);
    for (Eigen::Index r = 5; r < 200; ++r) {
      gp = gp.add_observation(z.row(r).transpose(), y.row(r).transpose());
    }
    const GpModel refit = GpModel::fit(z, y, linear, opts);
    const MatrixXd test = fixture::uniform_rows(100, 3, 2.0, rng);
    for (Eigen::Index t = 0; t < test.rows(); ++t) {
      const auto p1 = gp.posterior(test.row(t).transpose());
      const auto p2 = refit.posterior(test.row(t).transpose());
      incremental_err = std::max(incremental_err, (p1.mean - p2.mean).cwiseAbs().maxCoeff());
      incremental_err =
          std::max(incremental_err,
                   (p1.stddev.cwiseAbs2() - p2.stddev.cwiseAbs2()).cwiseAbs().maxCoeff());
    }
  }

  // Confidence intervals from the theoretical beta around an RKHS member.
  constexpr double kBound = 1.0, kNoise = 0.05, kDelta = 0.01;
  long violations = 0, checked = 0;
  double beta_min = std::numeric_limits<double>::infinity(), beta_max = 0.0;
  std::normal_distribution<double> eps(0.0, kNoise);
  for (int trial = 0; trial < 20; ++trial) {
    const double l = ls(rng);
    auto opts = fixture::options(3, 1, l, 1.0, 0.0, kNoise);
    opts.confidence = {BetaMode::kTheoretical, std::nullopt, kBound, kDelta};
    const auto f = oracle::random_rkhs_function(3, 20, kBound, opts.kernels[0].lengthscales, 1.0,
                                                0.0, 1.0, rng);
    const MatrixXd z = fixture::uniform_rows(50, 3, 1.0, rng);
    MatrixXd y(50, 1);
    for (Eigen::Index r = 0; r < 50; ++r) y(r) = f(z.row(r).transpose()) + eps(rng);
    const GpModel gp = GpModel::fit(z, y, fixture::zero_prior(1, 2), opts);
    const double bt = beta(gp);
    beta_min = std::min(beta_min, bt);
    beta_max = std::max(beta_max, bt);
    const MatrixXd test = fixture::uniform_rows(10000, 3, 1.5, rng);
    for (Eigen::Index t = 0; t < test.rows(); ++t) {
      const VectorXd x = test.row(t).transpose();
      const auto post = gp.posterior(x);
      violations += std::abs(post.mean(0) - f(x)) > bt * post.stddev(0);
      ++checked;
    }
  }

  Outcome out;
  out.pass = dense_err <= 1e-8 && incremental_err <= 1e-8 && violations == 0;
  add(out.detail, "dense-solve max error " + sci(dense_err) + " (limit 1e-8)");
  add(out.detail, "incremental vs refit " + sci(incremental_err) + " (limit 1e-8)");
  add(out.detail, "confidence violations " + std::to_string(violations) + "/" +
                      std::to_string(checked) + ", beta in [" + fmt("%.2f", beta_min) + ", " +
                      fmt("%.2f", beta_max) + "]");
  return out;
}

// ---------------------------------------------------------------------------

MatrixXd lqr_feedback(const DynamicsModel& prior) {
  const MatrixXd j = prior.jacobian_at(VectorXd::Zero(2), VectorXd::Zero(1));
  return -dlqr(j.leftCols(2), j.rightCols(1), MatrixXd::Identity(2, 2), MatrixXd::Identity(1, 1))
              .gain;
}

Outcome reachability() {
  constexpr double kTol = 1e-9;
  std::mt19937_64 rng(404);
  long one_violations = 0, one_checked = 0, multi_violations = 0, multi_checked = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const auto sys = fixture::synthetic_system(rng);
    const MatrixXd gain = lqr_feedback(sys.prior);

    const Ellipsoidd set(oracle::random_vector(2, rng, 0.3), 0.02 * oracle::random_spd(2, rng));
    const MatrixXd k = trial % 2 == 0 ? gain : MatrixXd(MatrixXd::Zero(1, 2));
    const FeedbackLaw law{k, oracle::random_vector(1, rng, 0.5), set.center()};
    const auto next = one_step_feedback(set, law, sys.gp, sys.prior, sys.beta);
    const QuadraticForm form(next.center(), next.shape());
    for (const auto& x : oracle::ellipsoid_points(set.center(), set.shape(), 500, rng)) {
      one_violations += form(sys.step(x, law(x))) > 1.0 + kTol;
      ++one_checked;
    }

    const Ellipsoidd start(oracle::random_vector(2, rng, 0.2), 0.01 * oracle::random_spd(2, rng));
    std::vector<FeedbackLaw> laws;
    for (int t = 0; t < 5; ++t) {
      laws.push_back({gain, oracle::random_vector(1, rng, 0.3), VectorXd::Zero(2)});
    }
    const auto reach = multi_step(start, laws, sys.gp, sys.prior, sys.beta);
    std::vector<QuadraticForm> forms;
    for (const auto& e : reach.sets) forms.emplace_back(e.center(), e.shape());
    for (const auto& x0 : oracle::ellipsoid_points(start.center(), start.shape(), 500, rng)) {
      VectorXd x = x0;
      bool inside = true;
      for (std::size_t t = 0; t < reach.laws.size(); ++t) {
        x = sys.step(x, reach.laws[t](x));
        inside = inside && forms[t + 1](x) <= 1.0 + kTol;
      }
      multi_violations += !inside;
      ++multi_checked;
    }
  }
  Outcome out;
  out.pass = one_violations == 0 && multi_violations == 0;
  add(out.detail, "one-step violations " + std::to_string(one_violations) + "/" +
                      std::to_string(one_checked));
  add(out.detail, "T = 5 rollouts leaving some R_t " + std::to_string(multi_violations) + "/" +
                      std::to_string(multi_checked));
  return out;
}

// ---------------------------------------------------------------------------

NlpProblem boxed(Eigen::Index n, double box, std::function<NlpEvaluation(const VectorXd&)> f) {
  NlpProblem p;
  p.evaluate = std::move(f);
  p.lower = VectorXd::Constant(n, -box);
  p.upper = VectorXd::Constant(n, box);
  return p;
}

double first_sigma(const ReachSequence& reach) { return -reach.posteriors.front().stddev.sum(); }

Outcome solver_sanity() {
  Outcome out;

  // Closed-form oracles run at a tight solver tolerance; the experiments
  // keep the defaults.
  SolverSettings tight;
  tight.optimality_tolerance = 1e-8;
  tight.constraint_tolerance = 1e-8;

  // min u^2 s.t. u >= 1.
  {
    auto p = boxed(1, 5.0, [](const VectorXd& u) {
      return NlpEvaluation{u.squaredNorm(), u.array() - 1.0};
    });
    SolverSettings s = tight;
    s.multi_start = 3;
    std::mt19937_64 rng(1);
    const auto res = solve(p, s, rng);
    const double err = res.feasible() ? std::abs(res.decisions(0) - 1.0) : HUGE_VAL;
    out.pass = out.pass && err <= 1e-5;
    add(out.detail, "|u* - 1| = " + sci(err) + " (limit 1e-5)");
  }

  // 5-D convex QP with two active rows, solved by its KKT system.
  {
    std::mt19937_64 rng(2);
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
      const MatrixXd h = oracle::random_spd(5, rng, 0.5, 3.0);
      const MatrixXd c = oracle::random_matrix(4, 5, rng);
      const VectorXd x0 = oracle::random_vector(5, rng, 0.5);
      VectorXd d = c * x0;
      d.tail(2).array() -= 1.0;
      const VectorXd g = -h * x0 + c.topRows(2).transpose() * Eigen::Vector2d(0.7, 1.3);
      MatrixXd kkt = MatrixXd::Zero(7, 7);
      kkt.topLeftCorner(5, 5) = h;
      kkt.topRightCorner(5, 2) = -c.topRows(2).transpose();
      kkt.bottomLeftCorner(2, 5) = c.topRows(2);
      VectorXd rhs(7);
      rhs << -g, d.head(2);
      const VectorXd exact = kkt.fullPivLu().solve(rhs).head(5);
      auto p = boxed(5, 10.0, [&](const VectorXd& x) {
        return NlpEvaluation{0.5 * x.dot(h * x) + g.dot(x), c * x - d};
      });
      SolverSettings s = tight;
      s.multi_start = 2;
      const auto res = solve(p, s, rng);
      worst = std::max(worst, res.feasible() ? (res.decisions - exact).cwiseAbs().maxCoeff()
                                             : HUGE_VAL);
    }
    out.pass = out.pass && worst <= 1e-5;
    add(out.detail, "QP max deviation from KKT " + sci(worst) + " (limit 1e-5)");
  }

  // T = 1 pendulum safety problem against a 1001-point grid.
  const ExperimentConfig cfg = default_config();
  const DynamicsModel prior = prior_model(cfg.pendulum);
  const SafetyController safety = lqr_safe_controller(cfg.pendulum).controller;
  auto data_rng = stream(1, 1);
  const GpModel gp = initial_model(cfg, prior, safety, data_rng);
  {
    ExperimentConfig c1 = cfg;
    c1.horizon = 1;
    SafeMpcConfig mpc = c1.mpc_config();
    mpc.solver.multi_start = 5;
    double worst = 0.0;
    for (const Eigen::Vector2d x : {Eigen::Vector2d(0.08, 0.2), Eigen::Vector2d(-0.05, 0.1),
                                    Eigen::Vector2d(0.0, -0.3)}) {
      const PlanEvaluator eval(x, gp, prior, mpc, beta(gp), false);
      double best = std::numeric_limits<double>::infinity();
      for (int k = 0; k <= 1000; ++k) {
        const auto ev = eval.evaluate(VectorXd::Constant(1, -1.0 + 2.0 * k / 1000.0));
        if (ev.margins.minCoeff() >= -mpc.margin_tolerance) {
          best = std::min(best, first_sigma(ev.reach));
        }
      }
      std::mt19937_64 rng(3);
      const auto plan = solve_mpc(x, gp, prior, mpc, first_sigma, rng);
      worst = std::max(worst, plan.feasible && std::isfinite(best)
                                  ? std::abs(plan.objective - best)
                                  : HUGE_VAL);
    }
    out.pass = out.pass && worst <= 1e-3;
    add(out.detail, "T = 1 grid objective gap " + sci(worst) + " (limit 1e-3)");
  }

  // Same seed, same answer, bit for bit.
  {
    auto p = boxed(2, 3.0, [](const VectorXd& x) {
      const double obj = x.squaredNorm() + 2.0 * std::cos(3.0 * x(0)) * std::cos(3.0 * x(1));
      return NlpEvaluation{obj, VectorXd::Constant(1, 4.0 - x.squaredNorm())};
    });
    SolverSettings s;
    s.multi_start = 8;
    std::mt19937_64 r1(42), r2(42);
    const auto a = solve(p, s, r1), b = solve(p, s, r2);
    bool same = a.decisions == b.decisions && a.objective == b.objective &&
                a.start_index == b.start_index;

    ExperimentConfig c3 = cfg;
    c3.horizon = 3;
    SafeMpcConfig mpc = c3.mpc_config();
    mpc.solver.multi_start = 4;
    auto s1 = stream(7, 3), s2 = stream(7, 3);
    const auto plan = [&](std::mt19937_64& rng) {
      return solve_mpc(Eigen::Vector2d(0.05, -0.1), gp, prior, mpc,
                       [](const ReachSequence& r) { return first_sigma(r); }, rng);
    };
    const auto p1 = plan(s1), p2 = plan(s2);
    same = same && p1.decisions == p2.decisions && p1.objective == p2.objective &&
           p1.feasible == p2.feasible;
    out.pass = out.pass && same;
    add(out.detail, std::string("multi-start determinism ") + (same ? "bit-identical" : "DIFFERS"));
  }
  return out;
}

// ---------------------------------------------------------------------------

constexpr int kDynamicSeeds = 10;
constexpr int kStaticSeeds = 3;

// Audit of a feasibility log: states stay upright, feasible steps apply the
// plan, infeasible steps apply the shifted plan while one is left and the
// safety controller afterwards.
struct FallbackAudit {
  long steps = 0, violations = 0, infeasible = 0, shifted = 0, safe = 0, wrong = 0;

  void check(const std::vector<RunRecord>& records, int horizon, double torque_limit,
             const SafetyController& safety) {
    std::optional<int> since;  // steps since the last feasible solve
    for (const auto& r : records) {
      ++steps;
      violations += !(std::abs(r.state(0)) < M_PI / 2) ||
                    !(std::abs(r.next_state(0)) < M_PI / 2) || r.safety_violation;
      wrong += std::abs(r.input(0)) > torque_limit;
      if (r.feasible) {
        since = 0;
        wrong += r.applied_safe;
        continue;
      }
      ++infeasible;
      if (since) ++*since;
      if (since && *since < horizon) {
        ++shifted;
        wrong += r.applied_safe;
      } else {
        ++safe;
        wrong += !r.applied_safe || r.input != safety(r.state);
      }
    }
  }

  std::string summary() const {
    return std::to_string(infeasible) + " infeasible (shifted plan " + std::to_string(shifted) +
           ", pi_safe " + std::to_string(safe) + "), " + std::to_string(wrong) +
           " fallback inconsistencies";
  }
};

double plan_sigma(const ReachSequence& reach) {
  double total = 0.0;
  for (const auto& p : reach.posteriors) total += p.stddev.sum();
  return -total;
}

// Closed loop whose terminal set is replaced by a tiny box on steps
// [20, 40), so that plans become infeasible after feasible ones.
std::vector<RunRecord> blocked_loop(const ExperimentConfig& cfg, const SafetyController& safety) {
  const DynamicsModel prior = prior_model(cfg.pendulum);
  auto data_rng = stream(1, 1);
  auto noise_rng = stream(1, 2);
  auto solver_rng = stream(1, 3);
  GpModel gp = initial_model(cfg, prior, safety, data_rng);
  const SafeMpcConfig open = cfg.mpc_config();
  SafeMpcConfig blocked = open;
  blocked.safe_set = Polytoped::box(Eigen::Vector2d(-1e-4, -1e-4), Eigen::Vector2d(1e-4, 1e-4));
  PlanningObjective objective;
  objective.safety = plan_sigma;

  auto state = ControllerState::initial(cfg.horizon, safety);
  VectorXd x = cfg.initial_state;
  std::vector<RunRecord> records;
  for (int n = 0; n < 60; ++n) {
    const SafeMpcConfig& mpc = n >= 20 && n < 40 ? blocked : open;
    const auto step = controller_step(state, x, gp, prior, mpc, objective, solver_rng);
    const Transition tr = true_step(cfg.pendulum, x, step.input, noise_rng);
    VectorXd z(3);
    z << x, step.input;
    gp = gp.add_observation(z, tr.observation);
    RunRecord r;
    r.n = n;
    r.state = x;
    r.input = step.input;
    r.next_state = tr.next;
    r.feasible = step.diagnostics.feasible;
    r.applied_safe = step.diagnostics.applied_safe;
    records.push_back(r);
    state = step.next;
    x = tr.next;
  }
  return records;
}

Outcome end_to_end_safety() {
  ExperimentConfig cfg = default_config();
  cfg.kind = ExperimentKind::kDynamic;
  cfg.mode = ObjectiveMode::kStandard;
  cfg.horizon = 4;
  cfg.iterations = 200;
  const SafetyController safety = lqr_safe_controller(cfg.pendulum).controller;
  check_safe_set(cfg, safety);

  FallbackAudit main;
  for (int seed = 1; seed <= kDynamicSeeds; ++seed) {
    main.check(run_dynamic(cfg, static_cast<std::uint64_t>(seed)).records, cfg.horizon,
               cfg.pendulum.torque_limit, safety);
  }

  // Stress runs that exercise the fallback paths.
  ExperimentConfig small = cfg;
  small.safe_set = lyapunov_polygon(lqr_safe_controller(cfg.pendulum).riccati, 0.02, 8);
  FallbackAudit stress;
  stress.check(run_dynamic(small, 1).records, small.horizon, cfg.pendulum.torque_limit, safety);
  stress.check(blocked_loop(cfg, safety), cfg.horizon, cfg.pendulum.torque_limit, safety);

  Outcome out;
  out.pass = main.violations == 0 && main.wrong == 0 && stress.violations == 0 &&
             stress.wrong == 0 && stress.shifted > 0 && stress.safe > 0;
  add(out.detail, "default runs: |theta| >= pi/2 events " + std::to_string(main.violations) +
                      " over " + std::to_string(main.steps) + " steps, " +
                      std::to_string(kDynamicSeeds) + " seeds, " + main.summary());
  add(out.detail, "fallback stress runs: |theta| >= pi/2 events " +
                      std::to_string(stress.violations) + " over " +
                      std::to_string(stress.steps) + " steps, " + stress.summary());
  return out;
}

// ---------------------------------------------------------------------------

Outcome static_trend() {
  ExperimentConfig cfg = default_config();
  cfg.kind = ExperimentKind::kStatic;
  cfg.iterations = 200;
  std::vector<double> m1, m4;
  for (const int horizon : {1, 4}) {
    cfg.horizon = horizon;
    std::vector<std::vector<double>> curves;
    for (int seed = 1; seed <= kStaticSeeds; ++seed) {
      curves.push_back(information_curve(run_static(cfg, static_cast<std::uint64_t>(seed))));
    }
    (horizon == 1 ? m1 : m4) = median_curve(curves);
  }
  const double early = (m1[50] - m1[0]) / 50.0;
  const double late = (m1[200] - m1[150]) / 50.0;
  const double ratio = m4[200] / m1[200];
  Outcome out;
  out.pass = late < 0.5 * early && ratio >= 1.1;
  add(out.detail, "T = 1 median growth per iteration: 0-50 " + fmt("%.4f", early) +
                      ", 150-200 " + fmt("%.4f", late) + " (need late < half of early)");
  add(out.detail, "median I(200): T = 1 " + fmt("%.2f", m1[200]) + ", T = 4 " +
                      fmt("%.2f", m4[200]) + ", ratio " + fmt("%.3f", ratio) + " (need >= 1.1)");
  return out;
}

// ---------------------------------------------------------------------------

Outcome performance_trend() {
  ExperimentConfig cfg = default_config();
  cfg.kind = ExperimentKind::kDynamic;
  cfg.iterations = 200;
  Outcome out;
  for (int horizon = 2; horizon <= 5; ++horizon) {
    cfg.horizon = horizon;
    double med[2];
    for (const ObjectiveMode mode : {ObjectiveMode::kStandard, ObjectiveMode::kPerformance}) {
      cfg.mode = mode;
      std::vector<double> finals;
      for (int seed = 1; seed <= kDynamicSeeds; ++seed) {
        finals.push_back(run_dynamic(cfg, static_cast<std::uint64_t>(seed)).final_information());
      }
      med[mode == ObjectiveMode::kPerformance] = median(finals);
    }
    const bool ok = med[1] >= med[0];
    out.pass = out.pass && ok;
    add(out.detail, "T = " + std::to_string(horizon) + ": standard " + fmt("%.2f", med[0]) +
                        ", performance " + fmt("%.2f", med[1]) + (ok ? "" : " (ordering fails)"));
  }
  return out;
}

// ---------------------------------------------------------------------------

Outcome pendulum_physics() {
  const ExperimentConfig cfg = default_config();
  const PendulumParams& p = cfg.pendulum;
  const auto design = lqr_safe_controller(p);
  Outcome out;

  const VectorXd zero = VectorXd::Zero(2), u0 = VectorXd::Zero(1);
  const bool fixed = pendulum_step(p, zero, u0) == zero && prior_model(p)(zero, u0) == zero &&
                     design.controller(zero) == u0;
  out.pass = fixed;
  add(out.detail, std::string("upright fixed point ") + (fixed ? "exact" : "NOT exact"));

  PendulumParams frictionless = p;
  frictionless.friction = 0.0;
  VectorXd x = Eigen::Vector2d(0.1, 0.0);
  const double e0 = pendulum_energy(frictionless, x);
  double drift = 0.0;
  for (int k = 0; k < 1000; ++k) {
    x = pendulum_step(frictionless, x, u0);
    drift = std::max(drift, std::abs(pendulum_energy(frictionless, x) - e0) / std::abs(e0));
  }
  out.pass = out.pass && drift <= 1e-6;
  add(out.detail, "energy drift " + sci(drift) + " (limit 1e-6)");

  const auto [a, b] = prior_matrices(p);
  const double residual =
      riccati_residual(a, b, p.lqr_state_weight, p.lqr_input_weight, design.riccati)
          .cwiseAbs()
          .maxCoeff();
  out.pass = out.pass && residual <= 1e-9;
  add(out.detail, "Riccati residual " + sci(residual) + " (limit 1e-9)");

  std::string rcpi = "passes";
  try {
    auto rng = stream(0, 4);
    validate_safe_set(cfg.safe_set, p, design.controller, cfg.validation_samples,
                      cfg.validation_steps, rng);
  } catch (const ConfigError& e) {
    rcpi = std::string("FAILS: ") + e.what();
    out.pass = false;
  }
  std::mt19937_64 rng(909);
  long fallen = 0;
  for (const auto& x0 : sample_polytope(cfg.safe_set, 100, rng)) {
    VectorXd s = x0;
    for (int k = 0; k < 200; ++k) {
      s = pendulum_step(p, s, design.controller(s));
      fallen += !(std::abs(s(0)) < p.fall_angle);
    }
  }
  out.pass = out.pass && fallen == 0;
  add(out.detail, "invariance validation of the shipped safe set " + rcpi + " (" +
                      std::to_string(cfg.validation_samples) + " starts x " +
                      std::to_string(cfg.validation_steps) + " steps)");
  add(out.detail, "100 rollouts x 200 steps reaching |theta| >= pi/2: " + std::to_string(fallen));
  return out;
}

struct Criterion {
  const char* name;
  Outcome (*run)();
  double limit_seconds;  // <= 0: no stated bound
};

const Criterion kCriteria[] = {
    {"ellipsoid algebra containment", ellipsoid_algebra, 30.0},
    {"max_weighted_norm vs boundary sampling", weighted_norm, 10.0},
    {"GP correctness and confidence bounds", gp_correctness, 120.0},
    {"one-step and multi-step reachable set containment", reachability, 120.0},
    {"solver oracles and determinism", solver_sanity, 60.0},
    {"end-to-end dynamic safety and fallback", end_to_end_safety, 900.0},
    {"static exploration information trend", static_trend, 0.0},
    {"performance vs standard dynamic exploration", performance_trend, 0.0},
    {"pendulum physics and safe set", pendulum_physics, 60.0},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SafeMPC acceptance checks"};
  int which = 0;
  app.add_option("--criterion", which, "criterion number")
      ->required()
      ->check(CLI::Range(1, static_cast<int>(std::size(kCriteria))));
  CLI11_PARSE(app, argc, argv);

  const Criterion& c = kCriteria[which - 1];
  const auto t0 = std::chrono::steady_clock::now();
  Outcome out;
  try {
    out = c.run();
  } catch (const std::exception& e) {
    out.pass = false;
    out.detail = std::string("exception: ") + e.what();
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::string timing = fmt("%.1f s", seconds);
  if (c.limit_seconds > 0.0) {
    const bool in_time = seconds < c.limit_seconds;
    out.pass = out.pass && in_time;
    timing += std::string(in_time ? " < " : " OVER ") + fmt("%.0f s", c.limit_seconds);
  }
  std::cout << "criterion " << which << " (" << c.name << "): " << (out.pass ? "PASS" : "FAIL")
            << " | " << out.detail << " | " << timing << std::endl;
  return out.pass ? 0 : 1;
}
