/**
 * @file sparse.hpp
 * @brief Smallest eigenpairs of a sparse Hermitian pencil (A, M), M diagonal > 0.
 *
 * Method: block shift-invert Lanczos with full reorthogonalization and thick
 * restarts. With S = M^{1/2} the pencil is mapped to the standard Hermitian
 * problem for C = S^{-1} A S^{-1}; the Krylov operator is
 * (C - sigma)^{-1} = S (A - sigma M)^{-1} S, applied through a sparse
 * Cholesky factorization (CHOLMOD supernodal if WGB_HAVE_CHOLMOD is
 * defined, Eigen's simplicial LDL^H otherwise). The factorization succeeds
 * only for a positive definite A - sigma M, i.e. sigma below the whole
 * spectrum (for LDL^H: no negative pivots, Sylvester); otherwise sigma is
 * lowered and the pencil refactorized.
 *
 * A block start (default width 4) is used so that degenerate eigenvalues,
 * which a single-vector Krylov space cannot resolve, come out with their
 * full multiplicity.
 */
#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#ifdef WGB_HAVE_CHOLMOD
#include <Eigen/CholmodSupport>
#endif

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numeric>
#include <random>
#include <sstream>
#include <type_traits>
#include <vector>

#include "wgb/errors.hpp"
#include "wgb/numerics/dense.hpp"

namespace wgb::numerics {

template <typename Scalar>
using SparseMat = Eigen::SparseMatrix<Scalar, Eigen::ColMajor, int>;

/**
 * Pattern-compressed Hermitian A with a strictly positive diagonal mass M.
 * The pattern of A must be structurally symmetric; values are checked for
 * Hermiticity at construction (relative tolerance on stored entries).
 */
template <typename Scalar>
class SparseHermitianPencil {
 public:
  SparseHermitianPencil(SparseMat<Scalar> a, Eigen::VectorXd mass, double rel_tol = 1e-12)
      : a_(std::move(a)), mass_(std::move(mass)) {
    a_.makeCompressed();
    if (a_.rows() != a_.cols() || a_.rows() != mass_.size()) {
      throw ValidationError("SparseHermitianPencil: dimension mismatch");
    }
    if (mass_.size() > 0 && mass_.minCoeff() <= 0.0) {
      throw ValidationError("SparseHermitianPencil: mass must be strictly positive");
    }
    const double defect = hermitian_defect_sparse(a_);
    const double scale = a_.nonZeros() ? a_.coeffs().cwiseAbs().maxCoeff() : 1.0;
    if (defect > rel_tol * scale) {
      std::ostringstream os;
      os << "SparseHermitianPencil: Hermitian defect " << defect << " (scale " << scale << ")";
      throw ValidationError(os.str());
    }
  }

  Eigen::Index dim() const noexcept { return a_.rows(); }
  const SparseMat<Scalar>& a() const noexcept { return a_; }
  const Eigen::VectorXd& mass() const noexcept { return mass_; }

  /// max |A(i,j) - conj(A(j,i))| over the stored pattern (and its transpose).
  static double hermitian_defect_sparse(const SparseMat<Scalar>& a) {
    SparseMat<Scalar> diff = a - SparseMat<Scalar>(a.adjoint());
    double worst = 0.0;
    for (int c = 0; c < diff.outerSize(); ++c) {
      for (typename SparseMat<Scalar>::InnerIterator it(diff, c); it; ++it) {
        worst = std::max(worst, std::abs(it.value()));
      }
    }
    return worst;
  }

 private:
  SparseMat<Scalar> a_;
  Eigen::VectorXd mass_;
};

struct SparseEigenOptions {
  int block_size = 4;
  int basis_size = 0;          ///< Krylov basis width; 0 selects max(3k + 2b, 32)
  int max_restarts = 60;
  double tol = 1e-8;           ///< ||A x - E M x|| / ||M x||
  std::uint64_t seed = 0x5eedULL;
  int max_shift_retries = 40;
  Eigen::Index dense_crossover = 500;  ///< used by eig_pencil_smallest only
};

template <typename Scalar>
struct SparseEigenResult {
  std::vector<double> values;     ///< ascending
  DenseMat<Scalar> vectors;       ///< M-orthonormal columns
  std::vector<double> residuals;  ///< ||A x - E M x|| / ||M x|| per pair
  double shift = 0.0;             ///< shift actually used
  int restarts = 0;
};

namespace detail {

template <typename Scalar>
DenseMat<Scalar> random_block(Eigen::Index n, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  DenseMat<Scalar> out(n, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      if constexpr (std::is_same_v<Scalar, double>) {
        out(i, j) = g(rng);
      } else {
        const double re = g(rng);
        out(i, j) = Scalar(re, g(rng));
      }
    }
  }
  return out;
}

/// Orthonormalizes `block` against `basis` and itself (two-pass Gram-Schmidt).
/// Columns that collapse are replaced by fresh random directions.
template <typename Scalar>
DenseMat<Scalar> orthonormalize(DenseMat<Scalar> block, const DenseMat<Scalar>& basis,
                                std::mt19937_64& rng) {
  const Eigen::Index n = block.rows();
  DenseMat<Scalar> accepted(n, 0);
  for (Eigen::Index c = 0; c < block.cols(); ++c) {
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> v = block.col(c);
    for (int attempt = 0; attempt < 4; ++attempt) {
      const double before = v.norm();
      for (int pass = 0; pass < 2; ++pass) {
        if (basis.cols() > 0) v -= basis * (basis.adjoint() * v);
        if (accepted.cols() > 0) v -= accepted * (accepted.adjoint() * v);
      }
      const double after = v.norm();
      if (after > 1e-10 * std::max(before, 1e-300) && after > 0.0) {
        accepted.conservativeResize(n, accepted.cols() + 1);
        accepted.col(accepted.cols() - 1) = v / after;
        break;
      }
      if (basis.cols() + accepted.cols() >= n) break;
      v = random_block<Scalar>(n, 1, rng).col(0);
    }
  }
  return accepted;
}

/**
 * Factorization of A - sigma M that succeeds only when the matrix is
 * positive definite, i.e. sigma lies below the whole spectrum. Supernodal
 * Cholesky (CHOLMOD) when available, otherwise Eigen's simplicial LDL^H
 * with an inertia check on D.
 */
template <typename Scalar>
class ShiftedFactor {
 public:
  bool factor_if_definite(const SparseMat<Scalar>& m) {
#ifdef WGB_HAVE_CHOLMOD
    if (!analyzed_) {
      llt_.analyzePattern(m);
      analyzed_ = true;
    }
    llt_.factorize(m);
    return llt_.info() == Eigen::Success;
#else
    if (!analyzed_) {
      ldlt_.analyzePattern(m);
      analyzed_ = true;
    }
    ldlt_.factorize(m);
    if (ldlt_.info() != Eigen::Success) return false;
    const Eigen::VectorXd d = ldlt_.vectorD().real();
    const double dmax = d.cwiseAbs().maxCoeff();
    return d.cwiseAbs().minCoeff() > 1e-14 * dmax && !(d.array() < 0.0).any();
#endif
  }

  template <typename Rhs>
  DenseMat<Scalar> solve(const Rhs& b) const {
#ifdef WGB_HAVE_CHOLMOD
    return llt_.solve(b);
#else
    return ldlt_.solve(b);
#endif
  }

 private:
  bool analyzed_ = false;
#ifdef WGB_HAVE_CHOLMOD
  Eigen::CholmodSupernodalLLT<SparseMat<Scalar>, Eigen::Lower> llt_;
#else
  Eigen::SimplicialLDLT<SparseMat<Scalar>, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;
#endif
};

}  // namespace detail

/**
 * The k smallest generalized eigenvalues of (A, M).
 *
 * `shift` must lie below the wanted eigenvalues; if the factorization shows
 * eigenvalues below it, the shift is lowered (step doubling) and the pencil
 * refactorized. Throws SolverError when the shift search or the restart
 * budget is exhausted; the exception carries the last residual norms.
 */
template <typename Scalar>
SparseEigenResult<Scalar> eig_sparse_smallest(const SparseHermitianPencil<Scalar>& p,
                                              Eigen::Index k, double shift,
                                              const SparseEigenOptions& opt = {}) {
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Mat = DenseMat<Scalar>;
  const Eigen::Index n = p.dim();
  if (k < 1 || k > n) throw ValidationError("eig_sparse_smallest: k outside [1, dim]");

  SparseMat<Scalar> mass_mat(n, n);
  {
    std::vector<Eigen::Triplet<Scalar>> diag;
    diag.reserve(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) diag.emplace_back(int(i), int(i), Scalar(p.mass()(i)));
    mass_mat.setFromTriplets(diag.begin(), diag.end());
  }
  detail::ShiftedFactor<Scalar> factor;
  double sigma = shift;
  double step = std::max(1.0, 1e-3 * std::abs(shift));
  for (int attempt = 0;; ++attempt) {
    if (attempt > opt.max_shift_retries) {
      throw SolverError("eig_sparse_smallest: no admissible shift found below the spectrum");
    }
    if (factor.factor_if_definite(SparseMat<Scalar>(p.a() - Scalar(sigma) * mass_mat))) break;
    sigma -= step;
    step *= 2.0;
  }

  const Eigen::VectorXd sqrt_mass = p.mass().cwiseSqrt();
  auto apply_op = [&](const Mat& y) -> Mat {
    Mat rhs = sqrt_mass.asDiagonal() * y;
    Mat sol = factor.solve(rhs);
    return sqrt_mass.asDiagonal() * sol;
  };

  std::mt19937_64 rng(opt.seed);
  const Eigen::Index b = std::clamp<Eigen::Index>(opt.block_size, 1, n);
  Eigen::Index m = opt.basis_size > 0 ? opt.basis_size : std::max<Eigen::Index>(3 * k + 2 * b, 32);
  m = std::min(m, n);
  if (m < k + 1 && m < n) m = std::min(n, k + b);

  Mat basis(n, 0);
  Mat images(n, 0);
  Mat next = detail::random_block<Scalar>(n, b, rng);

  SparseEigenResult<Scalar> out;
  out.shift = sigma;
  std::vector<double> last_res;

  for (int restart = 0; restart <= opt.max_restarts; ++restart) {
    // Expand the Krylov basis block by block up to width m.
    while (basis.cols() < m) {
      Mat q = detail::orthonormalize<Scalar>(next, basis, rng);
      if (q.cols() == 0) break;
      const Eigen::Index room = m - basis.cols();
      // Only whole blocks, so that the restart carries the full residual block.
      if (q.cols() > room) {
        if (m < n && basis.cols() >= k + 1) break;
        q.conservativeResize(n, room);
      }
      Mat w = apply_op(q);
      const Eigen::Index old = basis.cols();
      basis.conservativeResize(n, old + q.cols());
      images.conservativeResize(n, old + q.cols());
      basis.rightCols(q.cols()) = q;
      images.rightCols(q.cols()) = w;
      next = w;
    }

    // Rayleigh-Ritz on span(basis).
    Mat h = basis.adjoint() * images;
    h = (0.5 * (h + h.adjoint())).eval();
    Eigen::SelfAdjointEigenSolver<Mat> rr(h);
    if (rr.info() != Eigen::Success) throw SolverError("eig_sparse_smallest: Rayleigh-Ritz failed");
    const Eigen::Index w = basis.cols();
    if (w < k) throw SolverError("eig_sparse_smallest: Krylov space collapsed");
    // Largest Ritz values of the inverted operator are the smallest pencil eigenvalues.
    Mat y(w, k);
    Eigen::VectorXd mu(k);
    for (Eigen::Index j = 0; j < k; ++j) {
      y.col(j) = rr.eigenvectors().col(w - 1 - j);
      mu(j) = rr.eigenvalues()(w - 1 - j);
    }
    if (mu.minCoeff() <= 0.0) {
      throw SolverError("eig_sparse_smallest: nonpositive Ritz value of the inverted operator");
    }
    // One more application of the operator (already stored in `images`)
    // damps the stiff components that the residual amplifies, then a final
    // Rayleigh-Ritz step with C itself gives the energies.
    Mat z = images * y;
    Eigen::HouseholderQR<Mat> qr(z);
    Mat q = qr.householderQ() * Mat::Identity(n, k);
    Mat x = sqrt_mass.cwiseInverse().asDiagonal() * q;
    Mat ax = p.a() * x;
    Mat hk = x.adjoint() * ax;
    hk = (0.5 * (hk + hk.adjoint())).eval();
    Eigen::SelfAdjointEigenSolver<Mat> fin(hk);
    x = (x * fin.eigenvectors()).eval();
    ax = (ax * fin.eigenvectors()).eval();
    last_res.assign(static_cast<std::size_t>(k), 0.0);
    std::vector<double> energies(static_cast<std::size_t>(k));
    bool converged = true;
    for (Eigen::Index j = 0; j < k; ++j) {
      const double e = fin.eigenvalues()(j);
      energies[std::size_t(j)] = e;
      Vec mx = p.mass().asDiagonal() * x.col(j);
      const double res = (ax.col(j) - Scalar(e) * mx).norm() / std::max(mx.norm(), 1e-300);
      last_res[std::size_t(j)] = res;
      if (!(res <= opt.tol)) converged = false;
    }
    if (converged || w == n) {
      if (!converged) {
        throw SolverError("eig_sparse_smallest: full space spanned without meeting tolerance",
                          last_res);
      }
      std::vector<Eigen::Index> order(static_cast<std::size_t>(k));
      std::iota(order.begin(), order.end(), Eigen::Index{0});
      std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index c) {
        return energies[std::size_t(a)] < energies[std::size_t(c)];
      });
      out.vectors.resize(n, k);
      for (Eigen::Index j = 0; j < k; ++j) {
        const auto src = order[std::size_t(j)];
        out.values.push_back(energies[std::size_t(src)]);
        out.residuals.push_back(last_res[std::size_t(src)]);
        out.vectors.col(j) = x.col(src);
      }
      out.restarts = restart;
      return out;
    }

    // Thick restart: keep the wanted Ritz vectors and about half of the rest.
    const Eigen::Index keep =
        std::min<Eigen::Index>(w - 1, std::min<Eigen::Index>(m - b, std::max<Eigen::Index>(k + b, (w + k) / 2)));
    Mat ykeep(w, keep);
    for (Eigen::Index j = 0; j < keep; ++j) ykeep.col(j) = rr.eigenvectors().col(w - 1 - j);
    Mat new_basis = basis * ykeep;
    Mat new_images = images * ykeep;
    // Continue from the residual block of the last expansion; every Ritz
    // residual lies in its span.
    next = detail::orthonormalize<Scalar>(next, basis, rng);
    if (next.cols() == 0) next = detail::random_block<Scalar>(n, b, rng);
    basis = std::move(new_basis);
    images = std::move(new_images);
  }
  throw SolverError("eig_sparse_smallest: restart budget exhausted", last_res);
}

/// Dense reference path for the same pencil: eigenvalues of S^{-1} A S^{-1}.
template <typename Scalar>
SparseEigenResult<Scalar> eig_pencil_dense(const SparseHermitianPencil<Scalar>& p, Eigen::Index k) {
  const Eigen::VectorXd inv_sqrt = p.mass().cwiseSqrt().cwiseInverse();
  DenseMat<Scalar> c = inv_sqrt.asDiagonal() * DenseMat<Scalar>(p.a()) * inv_sqrt.asDiagonal();
  c = (0.5 * (c + c.adjoint())).eval();
  const auto r = eigh_dense(DenseHermitian<Scalar>(c, INFINITY), k, true);
  SparseEigenResult<Scalar> out;
  out.vectors = inv_sqrt.asDiagonal() * r.vectors;
  DenseMat<Scalar> ax = p.a() * out.vectors;
  for (Eigen::Index j = 0; j < k; ++j) {
    out.values.push_back(r.values(j));
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> mx = p.mass().asDiagonal() * out.vectors.col(j);
    out.residuals.push_back((ax.col(j) - Scalar(r.values(j)) * mx).norm() /
                            std::max(mx.norm(), 1e-300));
  }
  return out;
}

/// Dispatches to the dense path up to `opt.dense_crossover` unknowns, sparse beyond.
template <typename Scalar>
SparseEigenResult<Scalar> eig_pencil_smallest(const SparseHermitianPencil<Scalar>& p,
                                              Eigen::Index k, double shift,
                                              const SparseEigenOptions& opt = {}) {
  if (p.dim() <= opt.dense_crossover) {
    auto r = eig_pencil_dense(p, k);
    r.shift = shift;
    return r;
  }
  return eig_sparse_smallest(p, k, shift, opt);
}

}  // namespace wgb::numerics
