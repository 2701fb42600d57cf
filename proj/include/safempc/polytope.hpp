#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/LU>

#include "safempc/errors.hpp"

namespace safempc {

/// H-representation {x | Hx <= h}.
template <typename Scalar>
class Polytope {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  Polytope() = default;

  Polytope(Matrix normals, Vector offsets)
      : normals_(std::move(normals)), offsets_(std::move(offsets)) {
    if (normals_.rows() != offsets_.size()) {
      throw ConfigError("Polytope: H has " + std::to_string(normals_.rows()) +
                        " rows but h has " + std::to_string(offsets_.size()) +
                        " entries");
    }
    for (Eigen::Index i = 0; i < normals_.rows(); ++i) {
      if (normals_.row(i).cwiseAbs().maxCoeff() == Scalar(0)) {
        throw ConfigError("Polytope: row " + std::to_string(i) +
                          " of H is zero");
      }
    }
    if (!normals_.allFinite() || !offsets_.allFinite()) {
      throw ConfigError("Polytope: non-finite entries");
    }
  }

  /// lower <= x <= upper.
  static Polytope box(const Vector& lower, const Vector& upper) {
    const auto n = lower.size();
    Matrix h(2 * n, n);
    h.setZero();
    Vector off(2 * n);
    for (Eigen::Index i = 0; i < n; ++i) {
      h(2 * i, i) = Scalar(1);
      off(2 * i) = upper(i);
      h(2 * i + 1, i) = Scalar(-1);
      off(2 * i + 1) = -lower(i);
    }
    return Polytope(std::move(h), std::move(off));
  }

  const Matrix& normals() const { return normals_; }
  const Vector& offsets() const { return offsets_; }
  Eigen::Index dim() const { return normals_.cols(); }
  Eigen::Index num_rows() const { return normals_.rows(); }

  template <typename Derived>
  bool contains(const Eigen::MatrixBase<Derived>& x,
                Scalar tolerance = Scalar(0)) const {
    return ((normals_ * x - offsets_).array() <= tolerance).all();
  }

  /// h - Hx.
  template <typename Derived>
  Vector margins(const Eigen::MatrixBase<Derived>& x) const {
    return offsets_ - normals_ * x;
  }

  /// All vertices, by solving every dim()-subset of active rows.
  std::vector<Vector> vertices(Scalar tolerance = Scalar(1e-9)) const {
    return enumerate_vertices(normals_, offsets_, tolerance);
  }

  /// Meaningful for bounded polytopes, which are empty iff they have no
  /// vertex.
  bool is_empty() const { return vertices().empty(); }

  /// True iff {d | Hd <= 0} = {0}.
  bool is_bounded() const { return !has_unbounded_direction(); }

  /// Bounding box of a bounded polytope, from its vertices.
  std::pair<Vector, Vector> bounding_box() const {
    const auto verts = vertices();
    if (verts.empty() || !is_bounded()) {
      throw ConfigError("Polytope::bounding_box: polytope is empty or unbounded");
    }
    Vector lo = verts.front(), hi = verts.front();
    for (const auto& v : verts) {
      lo = lo.cwiseMin(v);
      hi = hi.cwiseMax(v);
    }
    return {lo, hi};
  }

  /// Bounded `this` ⊆ other, checked on the vertices of `this`.
  bool is_subset_of(const Polytope& other, Scalar tolerance = Scalar(1e-9)) const {
    if (other.dim() != dim()) return false;
    for (const auto& v : vertices()) {
      if (!other.contains(v, tolerance)) return false;
    }
    return true;
  }

  /// Throws ConfigError unless the set is nonempty and bounded.
  void validate_compact(const std::string& name) const {
    if (dim() == 0) throw ConfigError(name + ": polytope has dimension 0");
    if (!is_bounded()) throw ConfigError(name + ": polytope is unbounded");
    if (vertices().empty()) throw ConfigError(name + ": polytope is empty");
  }

 private:
  static std::vector<Vector> enumerate_vertices(const Matrix& hm,
                                                const Vector& hv,
                                                Scalar tolerance) {
    const auto n = hm.cols();
    const auto m = hm.rows();
    std::vector<Vector> out;
    if (n == 0 || m < n) return out;
    std::vector<Eigen::Index> pick(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) pick[static_cast<std::size_t>(i)] = i;
    Matrix sub(n, n);
    Vector rhs(n);
    while (true) {
      for (Eigen::Index i = 0; i < n; ++i) {
        sub.row(i) = hm.row(pick[static_cast<std::size_t>(i)]);
        rhs(i) = hv(pick[static_cast<std::size_t>(i)]);
      }
      Eigen::FullPivLU<Matrix> lu(sub);
      if (lu.isInvertible()) {
        Vector x = lu.solve(rhs);
        const Scalar scale = std::max(Scalar(1), x.cwiseAbs().maxCoeff());
        if (((hm * x - hv).array() <= tolerance * scale).all()) {
          const bool dup = std::any_of(out.begin(), out.end(), [&](const Vector& v) {
            return (v - x).cwiseAbs().maxCoeff() <= tolerance * scale;
          });
          if (!dup) out.push_back(std::move(x));
        }
      }
      // next combination
      Eigen::Index k = n - 1;
      while (k >= 0 && pick[static_cast<std::size_t>(k)] == m - n + k) --k;
      if (k < 0) break;
      ++pick[static_cast<std::size_t>(k)];
      for (Eigen::Index j = k + 1; j < n; ++j) {
        pick[static_cast<std::size_t>(j)] = pick[static_cast<std::size_t>(j - 1)] + 1;
      }
    }
    return out;
  }

  bool has_unbounded_direction() const {
    // Recession cone {Hd <= 0} cut by the unit box; any nonzero vertex is a
    // direction of unboundedness.
    const auto n = dim();
    const auto m = num_rows();
    Matrix cone(m + 2 * n, n);
    Vector rhs(m + 2 * n);
    cone.topRows(m) = normals_;
    rhs.head(m).setZero();
    for (Eigen::Index i = 0; i < n; ++i) {
      cone.row(m + 2 * i).setZero();
      cone(m + 2 * i, i) = Scalar(1);
      cone.row(m + 2 * i + 1).setZero();
      cone(m + 2 * i + 1, i) = Scalar(-1);
      rhs(m + 2 * i) = Scalar(1);
      rhs(m + 2 * i + 1) = Scalar(1);
    }
    for (const auto& v : enumerate_vertices(cone, rhs, Scalar(1e-9))) {
      if (v.cwiseAbs().maxCoeff() > Scalar(1e-7)) return true;
    }
    return false;
  }

  Matrix normals_;
  Vector offsets_;
};

using Polytoped = Polytope<double>;

}  // namespace safempc
