/**
 * @file dense.hpp
 * @brief Dense Hermitian eigensolver.
 *
 * Thin contract layer over Eigen's SelfAdjointEigenSolver (Householder
 * tridiagonalization followed by implicit symmetric QR). Callers get
 * ascending eigenvalues and, optionally, orthonormal eigenvectors.
 */
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <sstream>

#include "wgb/errors.hpp"

namespace wgb::numerics {

using cplx = std::complex<double>;

template <typename Scalar>
using DenseMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Largest entrywise deviation |A(i,j) - conj(A(j,i))|.
template <typename Derived>
double hermitian_defect(const Eigen::MatrixBase<Derived>& a) {
  if (a.rows() != a.cols()) return INFINITY;
  return (a - a.adjoint()).cwiseAbs().maxCoeff();
}

/**
 * Square matrix known to be Hermitian.
 *
 * Construction checks entry (i,j) against conj(j,i); the default tolerance
 * is absolute and matches the typed invariant (1e-14). Storage is Eigen's
 * default column-major layout.
 */
template <typename Scalar>
class DenseHermitian {
 public:
  explicit DenseHermitian(DenseMat<Scalar> values, double tol = 1e-14)
      : values_(std::move(values)) {
    if (values_.rows() != values_.cols()) {
      throw ValidationError("DenseHermitian: matrix is not square");
    }
    const double defect = values_.size() == 0 ? 0.0 : hermitian_defect(values_);
    if (defect > tol) {
      std::ostringstream os;
      os << "DenseHermitian: Hermitian defect " << defect << " exceeds " << tol;
      throw ValidationError(os.str());
    }
  }

  Eigen::Index dim() const noexcept { return values_.rows(); }
  const DenseMat<Scalar>& values() const noexcept { return values_; }

 private:
  DenseMat<Scalar> values_;
};

template <typename Scalar>
struct DenseEigenResult {
  Eigen::VectorXd values;     ///< ascending
  DenseMat<Scalar> vectors;   ///< columns match values; empty when not requested
};

/**
 * The k smallest eigenvalues of a Hermitian matrix, ascending, multiplicity
 * counted. Throws SolverError if the QR sweep does not converge (Eigen caps
 * it at 30 sweeps per eigenvalue).
 */
template <typename Scalar>
DenseEigenResult<Scalar> eigh_dense(const DenseHermitian<Scalar>& m, Eigen::Index k,
                                    bool want_vectors = false) {
  if (k < 0 || k > m.dim()) {
    throw ValidationError("eigh_dense: requested count outside [0, dim]");
  }
  DenseEigenResult<Scalar> out;
  if (k == 0) return out;
  Eigen::SelfAdjointEigenSolver<DenseMat<Scalar>> solver(
      m.values(), want_vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) {
    throw SolverError("eigh_dense: QR iteration did not converge (dimension " +
                      std::to_string(m.dim()) + ")");
  }
  out.values = solver.eigenvalues().head(k);
  if (want_vectors) out.vectors = solver.eigenvectors().leftCols(k);
  return out;
}

/// max_j ||A x_j - lambda_j x_j|| / ||A||_F for a computed eigen-pair set.
template <typename Scalar>
double max_relative_residual(const DenseMat<Scalar>& a, const DenseEigenResult<Scalar>& r) {
  const double scale = std::max(a.norm(), 1e-300);
  double worst = 0.0;
  for (Eigen::Index j = 0; j < r.vectors.cols(); ++j) {
    const auto x = r.vectors.col(j);
    worst = std::max(worst, (a * x - r.values(j) * x).norm() / scale);
  }
  return worst;
}

}  // namespace wgb::numerics
