#pragma once

// Inverted-pendulum testbed: m l^2 θ'' = g m l sin θ - η θ' + u, state
// x = (θ, θ'), upright origin, torque saturated at ±torque_limit.

#include <random>

#include <Eigen/Core>

#include "safempc/dynamics.hpp"
#include "safempc/mpc.hpp"
#include "safempc/polytope.hpp"

namespace safempc {

struct PendulumParams {
  double mass = 0.15;        // kg
  double length = 0.5;       // m
  double friction = 0.1;     // N m s / rad
  double gravity = 9.81;     // m / s^2
  double torque_limit = 1.0; // N m
  double dt = 0.05;          // s
  int substeps = 10;         // RK4 steps per dt
  double noise_std = 0.01;   // observation noise, per component
  double prior_mass_factor = 0.7;
  double fall_angle = 1.5707963267948966;  // |θ| at or beyond counts as fallen
  Eigen::MatrixXd lqr_state_weight = Eigen::Vector2d(1.0, 2.0).asDiagonal();
  Eigen::MatrixXd lqr_input_weight = Eigen::MatrixXd::Constant(1, 1, 20.0);

  void validate() const;
};

/// (θ', θ'') of the true plant.
Eigen::Vector2d pendulum_ode(const PendulumParams& p, const Eigen::Vector2d& x, double u);

/// Advances by dt with `substeps` RK4 steps, u clipped to the torque limit.
Eigen::VectorXd pendulum_step(const PendulumParams& p, const Eigen::VectorXd& x,
                              const Eigen::VectorXd& u);

/// ½ m l² θ'² + g m l cos θ (conserved when η = 0, u = 0).
double pendulum_energy(const PendulumParams& p, const Eigen::VectorXd& x);

struct Transition {
  Eigen::VectorXd next;
  Eigen::VectorXd observation;  // next + N(0, noise_std^2 I)
};

/// Throws SimulationError on a non-finite state.
Transition true_step(const PendulumParams& p, const Eigen::VectorXd& x,
                     const Eigen::VectorXd& u, std::mt19937_64& rng);

/// Exact zero-order-hold discretization (A, B) of the frictionless,
/// reduced-mass dynamics linearized at the upright origin.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> prior_matrices(const PendulumParams& p);

/// The linear prior h(x, u) = A x + B u with constant Jacobian.
DynamicsModel prior_model(const PendulumParams& p);

struct SafetyDesign {
  SafetyController controller;
  Eigen::MatrixXd riccati;  // P of the prior LQR
};

/// LQR of the prior with the configured weights; u = sat(-K x).
SafetyDesign lqr_safe_controller(const PendulumParams& p);

/// Feedback-law form of pi_safe without saturation: K(x - p) + (-K p).
FeedbackLaw safe_feedback_law(const SafetyController& safety, const Eigen::VectorXd& center);

/// Polygon inscribed in {x | x^T P x <= level} with `sides` vertices.
Polytoped lyapunov_polygon(const Eigen::MatrixXd& p, double level, int sides);

/// Empirical invariance check: `samples` states drawn uniformly from the
/// polytope are rolled out `steps` times under pi_safe on the true plant;
/// every state must stay in the polytope and every unsaturated control
/// inside the torque limit. Throws ConfigError naming the first violation.
void validate_safe_set(const Polytoped& safe_set, const PendulumParams& p,
                       const SafetyController& safety, int samples, int steps,
                       std::mt19937_64& rng);

/// Uniform samples from a bounded polytope (rejection from its bounding box).
std::vector<Eigen::VectorXd> sample_polytope(const Polytoped& poly, std::size_t count,
                                             std::mt19937_64& rng);

/// max ||grad g_j|| of g = f - h over a box in z = (θ, θ', u), by central
/// differences at uniformly sampled points.
Eigen::VectorXd estimate_model_error_lipschitz(const PendulumParams& p,
                                               const Eigen::VectorXd& lower,
                                               const Eigen::VectorXd& upper,
                                               int samples, std::mt19937_64& rng);

}  // namespace safempc
