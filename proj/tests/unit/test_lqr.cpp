#include <cmath>

#include <Eigen/Eigenvalues>

#include "doctest.h"
#include "safempc/errors.hpp"
#include "safempc/lqr.hpp"

using namespace safempc;
using Eigen::MatrixXd;

TEST_CASE("scalar LQR has the closed-form solution") {
  const MatrixXd one = MatrixXd::Ones(1, 1);
  const auto sol = dlqr(one, one, one, one);
  const double p = (1.0 + std::sqrt(5.0)) / 2.0;
  CHECK(sol.cost(0, 0) == doctest::Approx(p).epsilon(1e-12));
  CHECK(sol.gain(0, 0) == doctest::Approx(p / (1.0 + p)).epsilon(1e-12));
}

TEST_CASE("double integrator LQR") {
  MatrixXd a(2, 2), b(2, 1);
  a << 1.0, 0.1, 0.0, 1.0;
  b << 0.005, 0.1;
  const MatrixXd q = MatrixXd::Identity(2, 2), r = MatrixXd::Identity(1, 1);
  const auto sol = dlqr(a, b, q, r);
  CHECK(riccati_residual(a, b, q, r, sol.cost).cwiseAbs().maxCoeff() <= 1e-9);
  const Eigen::EigenSolver<MatrixXd> es(a - b * sol.gain);
  CHECK(es.eigenvalues().cwiseAbs().maxCoeff() < 1.0);
  CHECK((sol.cost - sol.cost.transpose()).norm() < 1e-12);
}

TEST_CASE("unstabilizable pair is rejected") {
  MatrixXd a(2, 2), b(2, 1);
  a << 2.0, 0.0, 0.0, 0.5;
  b << 0.0, 1.0;
  CHECK_THROWS_AS(dlqr(a, b, MatrixXd::Identity(2, 2), MatrixXd::Identity(1, 1)),
                  NumericalError);
}
