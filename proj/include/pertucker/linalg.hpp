#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "pertucker/errors.hpp"
#include "pertucker/tensor.hpp"

namespace pertucker {

inline constexpr double kOrthonormalTol = 1e-10;

/// Column-orthonormal matrix spanning a mode subspace. Zero columns is allowed
/// and denotes the trivial subspace.
class FactorMatrix {
 public:
  FactorMatrix() = default;

  /// Wraps m after checking ‖mᵀm − I‖_F ≤ tol.
  explicit FactorMatrix(Matrix m, double tol = kOrthonormalTol) : m_(std::move(m)) {
    if (m_.cols() > m_.rows()) {
      throw ArgumentError("factor matrix has more columns (" + std::to_string(m_.cols()) + ") than rows (" +
                          std::to_string(m_.rows()) + ")");
    }
    const double err = (m_.transpose() * m_ - Matrix::Identity(m_.cols(), m_.cols())).norm();
    if (!(err <= tol)) {
      throw ArgumentError("factor matrix is not column-orthonormal (deviation " + std::to_string(err) + ")");
    }
  }

  /// The trivial rank-0 subspace of an ambient space.
  static FactorMatrix empty(std::size_t rows) { return FactorMatrix(Matrix(static_cast<Eigen::Index>(rows), 0)); }

  const Matrix& matrix() const { return m_; }
  std::size_t rows() const { return static_cast<std::size_t>(m_.rows()); }
  std::size_t rank() const { return static_cast<std::size_t>(m_.cols()); }

  Matrix projector() const { return m_ * m_.transpose(); }

  friend bool operator==(const FactorMatrix& a, const FactorMatrix& b) {
    return a.m_.rows() == b.m_.rows() && a.m_.cols() == b.m_.cols() && a.m_ == b.m_;
  }

 private:
  Matrix m_;
};

struct EigenSelection {
  FactorMatrix vectors;
  Vector values;  // nonincreasing
};

namespace detail {

// Largest-magnitude entry of each column made positive; the earliest index wins ties.
inline void normalize_signs(Matrix& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    Eigen::Index best = 0;
    double best_abs = -1.0;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      const double a = std::abs(m(i, j));
      if (a > best_abs) {
        best_abs = a;
        best = i;
      }
    }
    if (m.rows() > 0 && m(best, j) < 0.0) m.col(j) *= -1.0;
  }
}

inline void require_finite(const Matrix& m, const char* op) {
  if (!m.allFinite()) throw ArgumentError(std::string(op) + ": non-finite entries");
}

}  // namespace detail

/// Unit eigenvectors of (S + Sᵀ)/2 for its `rank` algebraically largest eigenvalues.
inline EigenSelection top_eigvecs(const Matrix& s, std::size_t rank) {
  detail::require_finite(s, "top_eigvecs");
  if (s.rows() != s.cols()) throw ArgumentError("top_eigvecs: matrix is not square");
  const auto n = static_cast<std::size_t>(s.rows());
  if (rank > n) {
    throw ArgumentError("top_eigvecs: rank " + std::to_string(rank) + " exceeds dimension " + std::to_string(n));
  }
  const double scale = std::max(1.0, s.cwiseAbs().maxCoeff());
  if ((s - s.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale) {
    throw ArgumentError("top_eigvecs: matrix is not symmetric");
  }
  if (rank == 0) return {FactorMatrix::empty(n), Vector(0)};
  const Matrix sym = 0.5 * (s + s.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym);
  if (solver.info() != Eigen::Success) throw NumericError("top_eigvecs: eigensolver failed");
  const auto r = static_cast<Eigen::Index>(rank);
  const Eigen::Index first = sym.rows() - r;
  // Eigen returns ascending order; flip to descending.
  Matrix vecs = solver.eigenvectors().middleCols(first, r).rowwise().reverse();
  Vector vals = solver.eigenvalues().segment(first, r).reverse();
  detail::normalize_signs(vecs);
  return {FactorMatrix(std::move(vecs)), std::move(vals)};
}

/// ‖UUᵀ − VVᵀ‖_F², evaluated as ‖(I − VVᵀ)U‖_F² + ‖(I − UUᵀ)V‖_F², which avoids
/// forming the projectors and stays accurate when the subspaces nearly coincide.
/// For equal ranks r this equals 2r − 2 Tr[UᵀVVᵀU].
inline double subspace_error(const Matrix& u, const Matrix& v) {
  if (u.rows() != v.rows()) {
    throw ArgumentError("subspace_error: ambient dimensions differ (" + std::to_string(u.rows()) + " vs " +
                        std::to_string(v.rows()) + ")");
  }
  const Matrix ru = u - v * (v.transpose() * u);
  const Matrix rv = v - u * (u.transpose() * v);
  return ru.squaredNorm() + rv.squaredNorm();
}

inline double subspace_error(const FactorMatrix& u, const FactorMatrix& v) {
  return subspace_error(u.matrix(), v.matrix());
}

/// (I − UUᵀ) S (I − UUᵀ), symmetrized.
inline Matrix project_out(const Matrix& s, const FactorMatrix& u) {
  if (s.rows() != s.cols() || static_cast<std::size_t>(s.rows()) != u.rows()) {
    throw ArgumentError("project_out: shape mismatch");
  }
  if (u.rank() == 0) return s;
  const Matrix& m = u.matrix();
  const Matrix su = s * m;                   // S U
  const Matrix usu = m.transpose() * su;     // Uᵀ S U
  Matrix out = s - su * m.transpose() - m * su.transpose() + m * usu * m.transpose();
  return 0.5 * (out + out.transpose());
}

/// Orthonormal basis (left singular vectors) for the column space of m.
inline FactorMatrix orthonormalize(const Matrix& m) {
  detail::require_finite(m, "orthonormalize");
  if (m.cols() > m.rows()) throw DegenerateInputError("orthonormalize: more columns than rows");
  if (m.cols() == 0) return FactorMatrix::empty(static_cast<std::size_t>(m.rows()));
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU);
  const Vector& sv = svd.singularValues();
  if (!(sv(sv.size() - 1) > 1e-12)) {
    throw DegenerateInputError("orthonormalize: input is rank deficient (smallest singular value " +
                               std::to_string(sv(sv.size() - 1)) + ")");
  }
  Matrix q = svd.matrixU();
  detail::normalize_signs(q);
  return FactorMatrix(std::move(q));
}

inline Matrix kron_chain(std::span<const FactorMatrix> fs) {
  std::vector<Matrix> ms;
  ms.reserve(fs.size());
  for (const auto& f : fs) ms.push_back(f.matrix());
  return kron_chain(std::span<const Matrix>(ms));
}

/// V_{K-1} ⊗ ... ⊗ V_0: the Kronecker order under which the vectorized Tucker
/// reconstruction of a canonically linearized core is (chain) · vec(core).
inline Matrix reverse_kron_chain(std::span<const FactorMatrix> fs) {
  std::vector<Matrix> ms;
  ms.reserve(fs.size());
  for (auto it = fs.rbegin(); it != fs.rend(); ++it) ms.push_back(it->matrix());
  return kron_chain(std::span<const Matrix>(ms));
}

}  // namespace pertucker
