#pragma once

// Ellipsoidal set algebra used by the reachability propagation and the MPC
// constraints. Shapes are positive *semi*definite throughout: the point set
// E(p, 0) is a valid ellipsoid and every operation below accepts it.

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <type_traits>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "safempc/errors.hpp"
#include "safempc/polytope.hpp"

namespace safempc {

/// Absolute slack on quadratic-form membership tests.
inline constexpr double kContainmentTolerance = 1e-9;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

namespace detail {

template <typename Derived>
MatrixX<typename Derived::Scalar> symmetrized(
    const Eigen::MatrixBase<Derived>& m) {
  return (m + m.transpose()) / typename Derived::Scalar(2);
}

template <typename Scalar>
Scalar max_eigenvalue(const MatrixX<Scalar>& sym) {
  if (sym.rows() == 0) return Scalar(0);
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> es(sym,
                                                    Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

}  // namespace detail

/// E(p, Q) = { x | (x - p)^T Q^+ (x - p) <= 1, x - p in range(Q) }.
template <typename Scalar>
class Ellipsoid {
 public:
  using Vector = VectorX<Scalar>;
  using Matrix = MatrixX<Scalar>;

  Ellipsoid(Vector center, const Matrix& shape) : center_(std::move(center)) {
    if (shape.rows() != shape.cols() || shape.rows() != center_.size()) {
      throw ConfigError("Ellipsoid: shape is " + std::to_string(shape.rows()) +
                        "x" + std::to_string(shape.cols()) +
                        " but center has dimension " +
                        std::to_string(center_.size()));
    }
    const Scalar scale = shape.cwiseAbs().maxCoeff();
    if (!shape.allFinite() || !center_.allFinite()) {
      throw ArgumentError("Ellipsoid: non-finite center or shape");
    }
    if (center_.size() > 0 &&
        (shape - shape.transpose()).cwiseAbs().maxCoeff() >
            Scalar(1e-12) * scale) {
      throw ArgumentError("Ellipsoid: shape matrix is not symmetric");
    }
    shape_ = detail::symmetrized(shape);
    if (center_.size() > 0 && scale > Scalar(0)) {
      Eigen::SelfAdjointEigenSolver<Matrix> es(shape_, Eigen::EigenvaluesOnly);
      if (es.eigenvalues().minCoeff() < Scalar(-1e-10) * shape_.trace()) {
        throw ArgumentError("Ellipsoid: shape matrix has a negative eigenvalue");
      }
    }
  }

  /// Degenerate singleton {p}.
  static Ellipsoid point(Vector center) {
    const auto n = center.size();
    return Ellipsoid(std::move(center), Matrix::Zero(n, n));
  }

  const Vector& center() const { return center_; }
  const Matrix& shape() const { return shape_; }
  Eigen::Index dim() const { return center_.size(); }

 private:
  Vector center_;
  Matrix shape_;
};

using Ellipsoidd = Ellipsoid<double>;

/// Axis-aligned box a ± b.
template <typename Scalar>
struct HyperRectangle {
  VectorX<Scalar> center;
  VectorX<Scalar> half_width;

  HyperRectangle(VectorX<Scalar> a, VectorX<Scalar> b)
      : center(std::move(a)), half_width(std::move(b)) {
    if (center.size() != half_width.size()) {
      throw ConfigError("HyperRectangle: center/half-width size mismatch");
    }
    if ((half_width.array() < Scalar(0)).any()) {
      throw ArgumentError("HyperRectangle: negative half-width");
    }
  }
};

using HyperRectangled = HyperRectangle<double>;

/// A E + b, exact.
template <typename Scalar, typename DerivedA, typename DerivedB>
Ellipsoid<Scalar> affine_transform(const Eigen::MatrixBase<DerivedA>& a,
                                   const Eigen::MatrixBase<DerivedB>& b,
                                   const Ellipsoid<Scalar>& e) {
  if (a.cols() != e.dim() || a.rows() != b.size()) {
    throw ConfigError("affine_transform: A is " + std::to_string(a.rows()) +
                      "x" + std::to_string(a.cols()) + ", b has size " +
                      std::to_string(b.size()) + ", ellipsoid has dimension " +
                      std::to_string(e.dim()));
  }
  MatrixX<Scalar> shape = a * e.shape() * a.transpose();
  return Ellipsoid<Scalar>(a * e.center() + b, detail::symmetrized(shape));
}

/// Outer ellipsoid of E1 ⊕ E2 with shape (1 + 1/c) Q1 + (1 + c) Q2. Without
/// an explicit c the trace-minimizing c = sqrt(tr Q1 / tr Q2) is used, and a
/// summand with zero trace contributes only its center.
template <typename Scalar>
Ellipsoid<Scalar> minkowski_sum_outer(const Ellipsoid<Scalar>& e1,
                                      const Ellipsoid<Scalar>& e2,
                                      std::optional<std::type_identity_t<Scalar>> c = std::nullopt) {
  if (e1.dim() != e2.dim()) {
    throw ConfigError("minkowski_sum_outer: dimension mismatch");
  }
  VectorX<Scalar> center = e1.center() + e2.center();
  if (c) {
    if (!(*c > Scalar(0))) {
      throw ArgumentError("minkowski_sum_outer: c must be positive");
    }
    return Ellipsoid<Scalar>(
        std::move(center),
        (Scalar(1) + Scalar(1) / *c) * e1.shape() + (Scalar(1) + *c) * e2.shape());
  }
  const Scalar tr1 = e1.shape().trace();
  const Scalar tr2 = e2.shape().trace();
  if (tr2 <= Scalar(0)) return Ellipsoid<Scalar>(std::move(center), e1.shape());
  if (tr1 <= Scalar(0)) return Ellipsoid<Scalar>(std::move(center), e2.shape());
  const Scalar copt = std::sqrt(tr1 / tr2);
  return Ellipsoid<Scalar>(std::move(center),
                           (Scalar(1) + Scalar(1) / copt) * e1.shape() +
                               (Scalar(1) + copt) * e2.shape());
}

/// max_{x in E(0,Q)} ||S x||_2 = sqrt(lambda_max(S Q S^T)). `tie_break` adds
/// a multiple of the identity before the eigenvalue solve; solvers use a tiny
/// value to keep the maximum differentiable across eigenvalue crossings.
template <typename DerivedQ, typename DerivedS>
typename DerivedQ::Scalar max_weighted_norm(
    const Eigen::MatrixBase<DerivedQ>& q, const Eigen::MatrixBase<DerivedS>& s,
    typename DerivedQ::Scalar tie_break = 0) {
  using Scalar = typename DerivedQ::Scalar;
  if (q.rows() != q.cols() || s.cols() != q.rows()) {
    throw ConfigError("max_weighted_norm: S has " + std::to_string(s.cols()) +
                      " columns, Q is " + std::to_string(q.rows()) + "x" +
                      std::to_string(q.cols()));
  }
  MatrixX<Scalar> sqs = detail::symmetrized(s * q * s.transpose());
  if (tie_break != Scalar(0)) {
    sqs.diagonal().array() += tie_break;
  }
  return std::sqrt(std::max(Scalar(0), detail::max_eigenvalue<Scalar>(sqs)));
}

/// a ± b ⊂ E(a, n diag(b)^2); corners lie on the boundary.
template <typename Scalar>
Ellipsoid<Scalar> rect_to_ellipsoid(const HyperRectangle<Scalar>& r) {
  const auto n = static_cast<Scalar>(r.center.size());
  VectorX<Scalar> diag = n * r.half_width.array().square();
  return Ellipsoid<Scalar>(r.center, diag.asDiagonal().toDenseMatrix());
}

/// Membership with pseudo-inverse handling of degenerate axes.
template <typename Scalar, typename Derived>
bool contains_point(const Ellipsoid<Scalar>& e,
                    const Eigen::MatrixBase<Derived>& x,
                    Scalar tolerance = Scalar(kContainmentTolerance)) {
  if (x.size() != e.dim()) {
    throw ConfigError("contains_point: dimension mismatch");
  }
  const VectorX<Scalar> d = x - e.center();
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> es(e.shape());
  const VectorX<Scalar>& w = es.eigenvalues();
  const VectorX<Scalar> y = es.eigenvectors().transpose() * d;
  const Scalar rank_cut =
      Scalar(1e-12) * std::max(Scalar(1), w.size() ? w.maxCoeff() : Scalar(0));
  Scalar form = 0;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (w(i) > rank_cut) {
      form += y(i) * y(i) / w(i);
    } else if (std::abs(y(i)) > Scalar(kContainmentTolerance)) {
      return false;
    }
  }
  return form <= Scalar(1) + tolerance;
}

/// Per-row support margins h_i - (H_i p + sqrt(H_i Q H_i^T)) of E against
/// {x | Hx <= h}; E lies inside iff every margin is nonnegative.
template <typename Scalar>
struct ContainmentMargins {
  bool inside = false;
  VectorX<Scalar> margins;
};

template <typename Scalar>
ContainmentMargins<Scalar> ellipsoid_in_polytope(const Ellipsoid<Scalar>& e,
                                                 const Polytope<Scalar>& p) {
  if (p.dim() != e.dim()) {
    throw ConfigError("ellipsoid_in_polytope: dimension mismatch");
  }
  const MatrixX<Scalar> hq = p.normals() * e.shape();
  const VectorX<Scalar> spread =
      (hq.cwiseProduct(p.normals())).rowwise().sum().cwiseMax(Scalar(0));
  ContainmentMargins<Scalar> out;
  out.margins =
      p.offsets() - p.normals() * e.center() - spread.cwiseSqrt();
  out.inside = out.margins.size() == 0 || out.margins.minCoeff() >= Scalar(0);
  return out;
}

/// Any F with F F^T = Q (eigen-based, valid for singular Q).
template <typename Scalar>
MatrixX<Scalar> shape_factor(const MatrixX<Scalar>& q) {
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> es(q);
  const VectorX<Scalar> root = es.eigenvalues().cwiseMax(Scalar(0)).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal();
}

/// Uniform samples from the ellipsoid volume (uniform in the unit ball, mapped
/// through a factor of Q).
template <typename Scalar, typename Rng>
std::vector<VectorX<Scalar>> sample_ellipsoid(const Ellipsoid<Scalar>& e,
                                              Rng& rng, std::size_t count) {
  const auto n = e.dim();
  const MatrixX<Scalar> factor = shape_factor<Scalar>(e.shape());
  std::normal_distribution<Scalar> gauss(0, 1);
  std::uniform_real_distribution<Scalar> unif(0, 1);
  std::vector<VectorX<Scalar>> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    VectorX<Scalar> dir(n);
    for (Eigen::Index i = 0; i < n; ++i) dir(i) = gauss(rng);
    const Scalar norm = dir.norm();
    if (norm > Scalar(0)) dir /= norm;
    const Scalar radius = std::pow(unif(rng), Scalar(1) / static_cast<Scalar>(n));
    out.push_back(e.center() + factor * (radius * dir));
  }
  return out;
}

}  // namespace safempc
