#ifndef FMTS_SUBSPACE_HPP
#define FMTS_SUBSPACE_HPP

/** @file
 * Orthonormal bases and subspace distances.
 */

#include <algorithm>
#include <cmath>
#include <string>

#include "fmts/candidate.hpp"
#include "fmts/core.hpp"

namespace fmts {

/// p x d matrix with orthonormal columns.
class SubspaceBasis {
 public:
  /// Validates orthonormality to `tol`.
  explicit SubspaceBasis(Matrix b, double tol = 1e-10) : b_(std::move(b)) {
    if (b_.cols() < 1 || b_.cols() > b_.rows()) {
      throw Error(ErrorCode::BadDimension, "basis needs 1 <= d <= p columns");
    }
    const Matrix gram = b_.transpose() * b_;
    const double err = (gram - Matrix::Identity(b_.cols(), b_.cols())).cwiseAbs().maxCoeff();
    if (!(err <= tol)) {
      throw Error(ErrorCode::InvalidArgument, "basis columns are not orthonormal");
    }
  }

  /// Orthonormalizes the columns of `a` (thin QR) and applies the sign
  /// convention of extract_basis.
  static SubspaceBasis orthonormalize(const Matrix& a) {
    if (a.cols() < 1 || a.cols() > a.rows()) {
      throw Error(ErrorCode::BadDimension, "basis needs 1 <= d <= p columns");
    }
    Eigen::HouseholderQR<Matrix> qr(a);
    Matrix q = qr.householderQ() * Matrix::Identity(a.rows(), a.cols());
    fix_signs(q);
    return SubspaceBasis(std::move(q));
  }

  const Matrix& matrix() const noexcept { return b_; }
  int p() const noexcept { return static_cast<int>(b_.rows()); }
  int d() const noexcept { return static_cast<int>(b_.cols()); }

  /// Makes each column's largest-magnitude entry positive (lowest index wins
  /// ties).
  static void fix_signs(Matrix& b) {
    for (Eigen::Index j = 0; j < b.cols(); ++j) {
      Eigen::Index best = 0;
      for (Eigen::Index i = 1; i < b.rows(); ++i) {
        if (std::abs(b(i, j)) > std::abs(b(best, j))) best = i;
      }
      if (b(best, j) < 0.0) b.col(j) = -b.col(j);
    }
  }

 private:
  Matrix b_;
};

/// Leading d eigenvectors of the candidate matrix.
inline SubspaceBasis extract_basis(const CandidateMatrix& m, int d) {
  const auto p = m.eigenvectors.cols();
  if (d < 1 || d > p) {
    throw Error(ErrorCode::BadDimension,
                "d = " + std::to_string(d) + " outside 1.." + std::to_string(p));
  }
  // Modified Gram-Schmidt keeps column j aligned with eigenvector j.
  Matrix q = m.eigenvectors.leftCols(d);
  for (int j = 0; j < d; ++j) {
    for (int i = 0; i < j; ++i) q.col(j) -= q.col(i).dot(q.col(j)) * q.col(i);
    q.col(j).normalize();
  }
  SubspaceBasis::fix_signs(q);
  return SubspaceBasis(std::move(q), 1e-9);
}

/// Affinity between two subspaces from the eigenvalues lambda_i^2 of
/// B^T A A^T B. `gamma` (reported as the vector correlation) is
/// sqrt(mean lambda_i^2) over the d compared directions, `rho` (reported as
/// the trace correlation) is sqrt(prod lambda_i^2), and d_measure = 1 - gamma.
/// These names are swapped relative to Hotelling and Hooper.
struct DistanceReport {
  double gamma = 0.0;
  double rho = 0.0;
  double d_measure = 1.0;
  bool reorthonormalized = false;
};

namespace detail {
inline bool is_orthonormal(const Matrix& b, double tol = 1e-10) {
  const Matrix gram = b.transpose() * b;
  return (gram - Matrix::Identity(b.cols(), b.cols())).cwiseAbs().maxCoeff() <= tol;
}
}  // namespace detail

inline DistanceReport distance(const Matrix& a_in, const Matrix& b_in) {
  if (a_in.rows() != b_in.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "bases live in different ambient dimensions");
  }
  DistanceReport out;
  Matrix a = a_in;
  Matrix b = b_in;
  if (!detail::is_orthonormal(a)) {
    a = SubspaceBasis::orthonormalize(a).matrix();
    out.reorthonormalized = true;
  }
  if (!detail::is_orthonormal(b)) {
    b = SubspaceBasis::orthonormalize(b).matrix();
    out.reorthonormalized = true;
  }
  // Work in the smaller basis so the product has d = min(d_a, d_b) rows.
  if (b.cols() > a.cols()) std::swap(a, b);
  const Matrix cross = b.transpose() * a;
  const Matrix prod = cross * cross.transpose();
  Eigen::SelfAdjointEigenSolver<Matrix> solver(prod, Eigen::EigenvaluesOnly);
  const Vector lam2 = solver.eigenvalues().cwiseMax(0.0).cwiseMin(1.0);
  const double d = static_cast<double>(lam2.size());
  out.gamma = std::clamp(std::sqrt(lam2.sum() / d), 0.0, 1.0);
  out.rho = std::clamp(std::sqrt(lam2.prod()), 0.0, 1.0);
  if (lam2.size() == 1) out.rho = out.gamma;
  out.d_measure = 1.0 - out.gamma;
  return out;
}

inline DistanceReport distance(const SubspaceBasis& a, const SubspaceBasis& b) {
  return distance(a.matrix(), b.matrix());
}

}  // namespace fmts

#endif  // FMTS_SUBSPACE_HPP
