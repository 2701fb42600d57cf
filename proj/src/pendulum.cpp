#include "safempc/pendulum.hpp"

#include <cmath>
#include <sstream>

#include <unsupported/Eigen/MatrixFunctions>

#include "safempc/errors.hpp"
#include "safempc/lqr.hpp"

namespace safempc {

using Eigen::MatrixXd;
using Eigen::Vector2d;
using Eigen::VectorXd;

void PendulumParams::validate() const {
  if (!(mass > 0 && length > 0 && friction >= 0 && gravity > 0 && torque_limit > 0 &&
        dt > 0 && noise_std >= 0 && fall_angle > 0)) {
    throw ConfigError("pendulum: physical constants must be positive (friction, noise >= 0)");
  }
  if (substeps < 1) throw ConfigError("pendulum: substeps must be at least 1");
  if (!(prior_mass_factor > 0.0)) {
    throw ConfigError("pendulum: prior mass factor must be positive");
  }
  if (lqr_state_weight.rows() != 2 || lqr_state_weight.cols() != 2 ||
      lqr_input_weight.rows() != 1 || lqr_input_weight.cols() != 1) {
    throw ConfigError("pendulum: LQR weights must be 2x2 and 1x1");
  }
}

Vector2d pendulum_ode(const PendulumParams& p, const Vector2d& x, double u) {
  const double inertia = p.mass * p.length * p.length;
  return {x(1), (p.gravity * p.mass * p.length * std::sin(x(0)) - p.friction * x(1) + u) /
                    inertia};
}

VectorXd pendulum_step(const PendulumParams& p, const VectorXd& x, const VectorXd& u) {
  const double torque = std::clamp(u(0), -p.torque_limit, p.torque_limit);
  Vector2d s = x.head<2>();
  const double h = p.dt / p.substeps;
  for (int i = 0; i < p.substeps; ++i) {
    const Vector2d k1 = pendulum_ode(p, s, torque);
    const Vector2d k2 = pendulum_ode(p, s + 0.5 * h * k1, torque);
    const Vector2d k3 = pendulum_ode(p, s + 0.5 * h * k2, torque);
    const Vector2d k4 = pendulum_ode(p, s + h * k3, torque);
    s += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return s;
}

double pendulum_energy(const PendulumParams& p, const VectorXd& x) {
  const double inertia = p.mass * p.length * p.length;
  return 0.5 * inertia * x(1) * x(1) + p.gravity * p.mass * p.length * std::cos(x(0));
}

Transition true_step(const PendulumParams& p, const VectorXd& x, const VectorXd& u,
                     std::mt19937_64& rng) {
  if (!x.allFinite() || !u.allFinite()) {
    throw SimulationError("pendulum: non-finite state or input");
  }
  Transition t;
  t.next = pendulum_step(p, x, u);
  if (!t.next.allFinite()) throw SimulationError("pendulum: integration produced a non-finite state");
  std::normal_distribution<double> noise(0.0, 1.0);
  t.observation = t.next;
  for (Eigen::Index i = 0; i < t.observation.size(); ++i) {
    t.observation(i) += p.noise_std * noise(rng);
  }
  return t;
}

std::pair<MatrixXd, MatrixXd> prior_matrices(const PendulumParams& p) {
  const double prior_mass = p.mass * p.prior_mass_factor;
  MatrixXd cont = MatrixXd::Zero(3, 3);
  cont(0, 1) = 1.0;
  cont(1, 0) = p.gravity / p.length;
  cont(1, 2) = 1.0 / (prior_mass * p.length * p.length);
  const MatrixXd disc = (cont * p.dt).exp();
  return {disc.topLeftCorner(2, 2), disc.topRightCorner(2, 1)};
}

DynamicsModel prior_model(const PendulumParams& p) {
  const auto [a, b] = prior_matrices(p);
  return linear_dynamics(a, b);
}

SafetyDesign lqr_safe_controller(const PendulumParams& p) {
  const auto [a, b] = prior_matrices(p);
  const LqrSolution lqr = dlqr(a, b, p.lqr_state_weight, p.lqr_input_weight);
  SafetyDesign design;
  design.controller.gain = lqr.gain;
  design.controller.lower = VectorXd::Constant(1, -p.torque_limit);
  design.controller.upper = VectorXd::Constant(1, p.torque_limit);
  design.riccati = lqr.cost;
  return design;
}

FeedbackLaw safe_feedback_law(const SafetyController& safety, const VectorXd& center) {
  return {-safety.gain, -safety.gain * center, center};
}

Polytoped lyapunov_polygon(const MatrixXd& p, double level, int sides) {
  if (sides < 3 || !(level > 0.0)) {
    throw ConfigError("lyapunov_polygon: need at least 3 sides and a positive level");
  }
  // x = L^-T y maps the circle ||y||^2 = level onto the level set.
  const Eigen::LLT<MatrixXd> llt(p);
  const MatrixXd upper = llt.matrixU();
  std::vector<Vector2d> verts;
  for (int k = 0; k < sides; ++k) {
    const double ang = 2.0 * M_PI * k / sides;
    const Vector2d y(std::sqrt(level) * std::cos(ang), std::sqrt(level) * std::sin(ang));
    verts.push_back(upper.triangularView<Eigen::Upper>().solve(y));
  }
  MatrixXd h(sides, 2);
  VectorXd off(sides);
  for (int k = 0; k < sides; ++k) {
    const Vector2d& a = verts[static_cast<std::size_t>(k)];
    const Vector2d& b = verts[static_cast<std::size_t>((k + 1) % sides)];
    Vector2d n(b(1) - a(1), a(0) - b(0));
    if (n.dot(a) < 0) n = -n;
    n.normalize();
    h.row(k) = n.transpose();
    off(k) = n.dot(a);
  }
  return Polytoped(h, off);
}

std::vector<VectorXd> sample_polytope(const Polytoped& poly, std::size_t count,
                                      std::mt19937_64& rng) {
  const auto [lo, hi] = poly.bounding_box();
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<VectorXd> out;
  out.reserve(count);
  while (out.size() < count) {
    VectorXd x(lo.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = lo(i) + unif(rng) * (hi(i) - lo(i));
    if (poly.contains(x)) out.push_back(std::move(x));
  }
  return out;
}

void validate_safe_set(const Polytoped& safe_set, const PendulumParams& p,
                       const SafetyController& safety, int samples, int steps,
                       std::mt19937_64& rng) {
  const auto starts = sample_polytope(safe_set, static_cast<std::size_t>(samples), rng);
  for (std::size_t s = 0; s < starts.size(); ++s) {
    VectorXd x = starts[s];
    for (int t = 0; t < steps; ++t) {
      const VectorXd raw = -safety.gain * x;
      if (std::abs(raw(0)) > p.torque_limit) {
        std::ostringstream os;
        os << "safe set validation: sample " << s << " (" << starts[s].transpose()
           << ") needs torque " << raw(0) << " at step " << t;
        throw ConfigError(os.str());
      }
      x = pendulum_step(p, x, safety(x));
      if (!safe_set.contains(x, 1e-12)) {
        std::ostringstream os;
        os << "safe set validation: sample " << s << " (" << starts[s].transpose()
           << ") leaves the safe set at step " << t + 1 << " (" << x.transpose() << ")";
        throw ConfigError(os.str());
      }
    }
  }
}

VectorXd estimate_model_error_lipschitz(const PendulumParams& p, const VectorXd& lower,
                                        const VectorXd& upper, int samples,
                                        std::mt19937_64& rng) {
  const DynamicsModel prior = prior_model(p);
  const MatrixXd prior_jac = prior.jacobian_at(VectorXd::Zero(2), VectorXd::Zero(1));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  // The error must not be clipped by the torque limit for a gradient to exist.
  PendulumParams unclipped = p;
  unclipped.torque_limit = std::numeric_limits<double>::infinity();
  const DynamicsModel::StepFn truth = [&unclipped](const VectorXd& x, const VectorXd& u) {
    return pendulum_step(unclipped, x, u);
  };
  VectorXd best = VectorXd::Zero(2);
  for (int k = 0; k < samples; ++k) {
    VectorXd z(3);
    for (int i = 0; i < 3; ++i) z(i) = lower(i) + unif(rng) * (upper(i) - lower(i));
    const MatrixXd jac = finite_difference_jacobian(truth, z.head(2), z.tail(1)) - prior_jac;
    best = best.cwiseMax(jac.rowwise().norm());
  }
  return best;
}

}  // namespace safempc
