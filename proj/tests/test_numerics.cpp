#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <vector>

#include "wgb/numerics/dense.hpp"
#include "wgb/numerics/fft.hpp"
#include "wgb/numerics/sparse.hpp"

using namespace wgb;
using namespace wgb::numerics;

namespace {

DenseMat<cplx> random_hermitian(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  DenseMat<cplx> a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = cplx(g(rng), g(rng));
  DenseMat<cplx> h = 0.5 * (a + a.adjoint());
  for (int i = 0; i < n; ++i) h(i, i) = h(i, i).real();
  return h;
}

SparseMat<double> dirichlet_1d(int n, double h) {
  std::vector<Eigen::Triplet<double>> t;
  for (int i = 0; i < n; ++i) {
    t.emplace_back(i, i, 2.0 / (h * h));
    if (i + 1 < n) {
      t.emplace_back(i, i + 1, -1.0 / (h * h));
      t.emplace_back(i + 1, i, -1.0 / (h * h));
    }
  }
  SparseMat<double> a(n, n);
  a.setFromTriplets(t.begin(), t.end());
  return a;
}

/// 5-point Dirichlet Laplacian on an n x n interior grid of the unit square.
SparseMat<double> dirichlet_square(int n) {
  const double h = 1.0 / (n + 1);
  std::vector<Eigen::Triplet<double>> t;
  auto id = [n](int i, int j) { return i * n + j; };
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      t.emplace_back(id(i, j), id(i, j), 4.0 / (h * h));
      if (i + 1 < n) {
        t.emplace_back(id(i, j), id(i + 1, j), -1.0 / (h * h));
        t.emplace_back(id(i + 1, j), id(i, j), -1.0 / (h * h));
      }
      if (j + 1 < n) {
        t.emplace_back(id(i, j), id(i, j + 1), -1.0 / (h * h));
        t.emplace_back(id(i, j + 1), id(i, j), -1.0 / (h * h));
      }
    }
  SparseMat<double> a(n * n, n * n);
  a.setFromTriplets(t.begin(), t.end());
  return a;
}

}  // namespace

TEST(EighDense, DiagonalMatrix) {
  DenseMat<double> a = Eigen::Vector3d(3, 1, 2).asDiagonal();
  const auto r = eigh_dense(DenseHermitian<double>(a), 3);
  EXPECT_DOUBLE_EQ(r.values(0), 1.0);
  EXPECT_DOUBLE_EQ(r.values(1), 2.0);
  EXPECT_DOUBLE_EQ(r.values(2), 3.0);
}

TEST(EighDense, SwapMatrix) {
  DenseMat<double> a(2, 2);
  a << 0, 1, 1, 0;
  const auto r = eigh_dense(DenseHermitian<double>(a), 2);
  EXPECT_NEAR(r.values(0), -1.0, 1e-15);
  EXPECT_NEAR(r.values(1), 1.0, 1e-15);
}

TEST(EighDense, TraceIdentityAndResidualsOnRandomHermitian) {
  const auto a = random_hermitian(50, 7);
  const auto r = eigh_dense(DenseHermitian<cplx>(a), 50, true);
  const double trace = a.trace().real();
  EXPECT_NEAR(r.values.sum(), trace, 1e-9 * std::abs(trace) + 1e-12);
  EXPECT_LE(max_relative_residual(a, r), 1e-10);
  for (int i = 1; i < 50; ++i) EXPECT_LE(r.values(i - 1), r.values(i));
}

TEST(EighDense, RejectsNonHermitianAndBadCount) {
  DenseMat<double> a(2, 2);
  a << 0, 1, 2, 0;
  EXPECT_THROW(DenseHermitian<double>{a}, ValidationError);
  DenseMat<double> rect(2, 3);
  rect.setZero();
  EXPECT_THROW(DenseHermitian<double>{rect}, ValidationError);
  DenseMat<double> ok = DenseMat<double>::Identity(2, 2);
  EXPECT_THROW(eigh_dense(DenseHermitian<double>(ok), 3), ValidationError);
}

TEST(EigSparse, DiscreteDirichletLaplacianClosedForm) {
  const int n = 100;
  const double h = 1.0 / 101.0;
  SparseHermitianPencil<double> p(dirichlet_1d(n, h), Eigen::VectorXd::Ones(n));
  const auto r = eig_sparse_smallest(p, 3, 0.0);
  for (int j = 1; j <= 3; ++j) {
    const double exact = 2.0 * (1.0 - std::cos(j * std::numbers::pi * h)) / (h * h);
    EXPECT_NEAR(r.values[static_cast<std::size_t>(j - 1)], exact, 1e-10 * exact) << "j = " << j;
    EXPECT_LE(r.residuals[static_cast<std::size_t>(j - 1)], 1e-8);
  }
}

TEST(EigSparse, IdentityMassMatchesDenseSolver) {
  const int n = 200;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Eigen::Triplet<cplx>> t;
  for (int i = 0; i < n; ++i) {
    t.emplace_back(i, i, cplx(4.0 + u(rng), 0.0));
    for (int off : {1, 7}) {
      if (i + off < n) {
        const cplx v(u(rng), u(rng));
        t.emplace_back(i, i + off, v);
        t.emplace_back(i + off, i, std::conj(v));
      }
    }
  }
  SparseMat<cplx> a(n, n);
  a.setFromTriplets(t.begin(), t.end());
  SparseHermitianPencil<cplx> p(a, Eigen::VectorXd::Ones(n));
  const auto sparse = eig_sparse_smallest(p, 5, -10.0);
  const auto dense = eigh_dense(DenseHermitian<cplx>(DenseMat<cplx>(a)), 5);
  for (int j = 0; j < 5; ++j) EXPECT_NEAR(sparse.values[static_cast<std::size_t>(j)], dense.values(j), 1e-8);
}

TEST(EigSparse, GeneralizedPencilMatchesEigenGeneralizedSolver) {
  const int n = 150;
  auto a = dirichlet_1d(n, 1.0 / (n + 1));
  Eigen::VectorXd m(n);
  for (int i = 0; i < n; ++i) m(i) = 1.0 + 0.5 * std::sin(0.1 * i);
  SparseHermitianPencil<double> p(a, m);
  const auto r = eig_sparse_smallest(p, 4, 0.0);
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> oracle(Eigen::MatrixXd(a),
                                                                    Eigen::MatrixXd(m.asDiagonal()));
  for (int j = 0; j < 4; ++j) {
    EXPECT_NEAR(r.values[static_cast<std::size_t>(j)], oracle.eigenvalues()(j), 1e-9 * oracle.eigenvalues()(j));
  }
}

TEST(EigSparse, SmallestOfSpdPencilIsPositive) {
  SparseHermitianPencil<double> p(dirichlet_1d(60, 1.0 / 61), Eigen::VectorXd::Constant(60, 2.0));
  const auto r = eig_sparse_smallest(p, 1, 0.0);
  EXPECT_GT(r.values[0], 0.0);
}

TEST(EigSparse, DegenerateEigenvaluesKeepMultiplicity) {
  const int n = 30;
  SparseHermitianPencil<double> p(dirichlet_square(n), Eigen::VectorXd::Ones(n * n));
  const auto r = eig_sparse_smallest(p, 3, 0.0);
  const double h = 1.0 / (n + 1);
  auto lam = [h](int j) { return 4.0 / (h * h) * std::pow(std::sin(j * std::numbers::pi * h / 2), 2); };
  EXPECT_NEAR(r.values[0], 2 * lam(1), 1e-9 * r.values[0]);
  EXPECT_NEAR(r.values[1], lam(1) + lam(2), 1e-9 * r.values[1]);
  EXPECT_NEAR(r.values[2], lam(1) + lam(2), 1e-9 * r.values[2]);
}

TEST(EigSparse, ShiftAboveSpectrumIsLoweredAutomatically) {
  const int n = 100;
  const double h = 1.0 / 101.0;
  SparseHermitianPencil<double> p(dirichlet_1d(n, h), Eigen::VectorXd::Ones(n));
  const auto r = eig_sparse_smallest(p, 2, 100.0);
  EXPECT_LT(r.shift, r.values[0]);
  EXPECT_NEAR(r.values[0], 2.0 * (1.0 - std::cos(std::numbers::pi * h)) / (h * h), 1e-9);
}

TEST(EigSparse, DeterministicForFixedSeed) {
  SparseHermitianPencil<double> p(dirichlet_square(25), Eigen::VectorXd::Ones(625));
  SparseEigenOptions opt;
  opt.seed = 1234;
  const auto a = eig_sparse_smallest(p, 4, 0.0, opt);
  const auto b = eig_sparse_smallest(p, 4, 0.0, opt);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(a.values[j], b.values[j]);
}

TEST(EigSparse, UnreachableToleranceReportsResiduals) {
  SparseHermitianPencil<double> p(dirichlet_square(25), Eigen::VectorXd::Ones(625));
  SparseEigenOptions opt;
  opt.tol = 1e-30;
  opt.max_restarts = 3;
  try {
    eig_sparse_smallest(p, 2, 0.0, opt);
    FAIL() << "expected SolverError";
  } catch (const SolverError& e) {
    EXPECT_EQ(e.residuals().size(), 2u);
  }
}

TEST(SparsePencil, RejectsBadInput) {
  auto a = dirichlet_1d(10, 0.1);
  EXPECT_THROW((SparseHermitianPencil<double>(a, Eigen::VectorXd::Zero(10))), ValidationError);
  EXPECT_THROW((SparseHermitianPencil<double>(a, Eigen::VectorXd::Ones(9))), ValidationError);
  a.coeffRef(0, 1) = 5.0;
  EXPECT_THROW((SparseHermitianPencil<double>(a, Eigen::VectorXd::Ones(10))), ValidationError);
}

TEST(EigPencil, DenseAndSparsePathsAgree) {
  SparseHermitianPencil<double> p(dirichlet_square(20), Eigen::VectorXd::Constant(400, 0.5));
  const auto d = eig_pencil_dense(p, 4);
  SparseEigenOptions opt;
  opt.dense_crossover = 0;
  const auto s = eig_pencil_smallest(p, 4, 0.0, opt);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(d.values[j], s.values[j], 1e-9 * d.values[j]);
}

TEST(Fft, ImpulseGivesFlatSpectrum) {
  std::vector<double> x(16, 0.0);
  x[0] = 1.0;
  for (const auto& v : fft_periodic(x)) EXPECT_NEAR(std::abs(v - cplx(1.0)), 0.0, 1e-15);
}

TEST(Fft, ConstantGivesSingleZeroMode) {
  std::vector<double> x(32, 3.0);
  const auto X = fft_periodic(x);
  EXPECT_NEAR(X[0].real(), 96.0, 1e-12);
  for (std::size_t n = 1; n < X.size(); ++n) EXPECT_LT(std::abs(X[n]), 1e-12);
}

TEST(Fft, CosineMatchesDirectDftSum) {
  const int m = 64;
  std::vector<double> x(m);
  for (int j = 0; j < m; ++j) x[static_cast<std::size_t>(j)] = std::cos(2 * std::numbers::pi * j / m);
  const auto X = fft_periodic(x);
  for (int n = 0; n < m; ++n) {
    cplx direct = 0.0;
    for (int j = 0; j < m; ++j) direct += x[static_cast<std::size_t>(j)] * std::polar(1.0, -2 * std::numbers::pi * n * j / m);
    EXPECT_NEAR(std::abs(X[static_cast<std::size_t>(n)] - direct), 0.0, 1e-12);
  }
  EXPECT_NEAR(std::abs(X[1]) / m, 0.5, 1e-14);
  EXPECT_NEAR(std::abs(X[m - 1]) / m, 0.5, 1e-14);
}

TEST(Fft, RoundTripAndLengthCheck) {
  std::vector<cplx> x(128);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  for (auto& v : x) v = cplx(g(rng), g(rng));
  const auto y = ifft_periodic(fft_periodic(std::span<const cplx>(x)));
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(std::abs(x[i] - y[i]), 0.0, 1e-12);
  std::vector<double> bad(12, 1.0);
  EXPECT_THROW(fft_periodic(bad), ValidationError);
}
