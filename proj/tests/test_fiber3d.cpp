#include <gtest/gtest.h>

#include <unsupported/Eigen/KroneckerProduct>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "wgb/fiber3d.hpp"

using namespace wgb;
using numerics::cplx;

namespace {

constexpr double kPi = std::numbers::pi;

WaveguideGeometry tube(double L, double eps, std::vector<FourierMode> k, std::vector<FourierMode> tau,
                       std::vector<FourierMode> alpha, double c = 1.0) {
  GeometrySpec spec{PeriodicProfile::from_modes(L, k), PeriodicProfile::from_modes(L, tau),
                    PeriodicProfile::from_modes(L, alpha), eps, c, 1.0};
  return build_geometry(spec);
}

WaveguideGeometry straight(double L, double eps) { return tube(L, eps, {{0, 0.0}}, {{0, 0.0}}, {{0, 0.0}}); }

/// alpha = 0.5 sin(s) on L = 2 pi, so alpha' = 0.5 cos(2 pi s / L).
WaveguideGeometry twisted(double eps) { return tube(2 * kPi, eps, {{0, 0.0}}, {{0, 0.0}}, {{1, {0.0, -0.25}}}); }

WaveguideGeometry curved_twisted(double eps) {
  return tube(2 * kPi, eps, {{0, 1.0}, {1, 0.15}}, {{0, 0.2}}, {{1, {0.0, -0.15}}}, 2.0);
}

/// Periodic Peierls difference on ns nodes, as a dense matrix.
Eigen::MatrixXcd peierls_difference(int ns, double hs, double theta) {
  const cplx ph = std::polar(1.0, theta * hs / 2);
  Eigen::MatrixXcd s = Eigen::MatrixXcd::Zero(ns, ns);
  for (int i = 0; i < ns; ++i) {
    s(i, (i + 1) % ns) += ph / hs;
    s(i, i) -= std::conj(ph) / hs;
  }
  return s;
}

/// Square lattice section of 3 x 3 nodes with all boundary arms of length h.
SectionStencil toy_section(double h) {
  SectionStencil s;
  s.h = h;
  auto id = [](int i, int j) { return (i < 0 || j < 0 || i > 2 || j > 2) ? -1 : 3 * i + j; };
  std::vector<Eigen::Triplet<double>> phi;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      const Eigen::Vector2d y((i - 1) * h, (j - 1) * h);
      s.position.push_back(y);
      s.neighbor.push_back({id(i + 1, j), id(i - 1, j), id(i, j + 1), id(i, j - 1)});
      s.arm.push_back({h, h, h, h});
      // Phi = y1 d2 - y2 d1 with centered differences and zero outside.
      const int k = id(i, j);
      if (id(i, j + 1) >= 0) phi.emplace_back(k, id(i, j + 1), y.x() / (2 * h));
      if (id(i, j - 1) >= 0) phi.emplace_back(k, id(i, j - 1), -y.x() / (2 * h));
      if (id(i + 1, j) >= 0) phi.emplace_back(k, id(i + 1, j), -y.y() / (2 * h));
      if (id(i - 1, j) >= 0) phi.emplace_back(k, id(i - 1, j), y.y() / (2 * h));
    }
  }
  s.angular.resize(9, 9);
  s.angular.setFromTriplets(phi.begin(), phi.end());
  return s;
}

double max_abs(const SparseCplx& m) {
  double worst = 0.0;
  for (int c = 0; c < m.outerSize(); ++c)
    for (SparseCplx::InnerIterator it(m, c); it; ++it) worst = std::max(worst, std::abs(it.value()));
  return worst;
}

/// Discrete 5-point Dirichlet eigenvalues of the unit square with n - 1 interior nodes per side.
std::vector<double> square_fd_eigenvalues(int n) {
  const double h = 1.0 / n;
  std::vector<double> out;
  for (int a = 1; a < n; ++a)
    for (int b = 1; b < n; ++b)
      out.push_back(4.0 / (h * h) * (std::pow(std::sin(a * kPi * h / 2), 2) + std::pow(std::sin(b * kPi * h / 2), 2)));
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST(AssembleFiber, StraightTubeEqualsKroneckerSum) {
  const double L = 2 * kPi, eps = 0.1, theta = 0.3;
  const int ns = 16;
  const auto mask = rasterize_section(Rectangle{1.0, 1.0}, 1.0 / 16.0);
  const auto p = assemble_fiber(straight(L, eps), mask, ns, theta);
  const double hs = L / ns, h = mask.h(), vol = hs * h * h;
  const Eigen::MatrixXcd s = peierls_difference(ns, hs, theta);
  const SparseCplx longi = Eigen::MatrixXcd(s.adjoint() * s).sparseView(0.0, 0.0);
  const auto ny = static_cast<int>(mask.size());
  SparseCplx eye_y(ny, ny), eye_s(ns, ns), eye(ns * ny, ns * ny);
  eye_y.setIdentity();
  eye_s.setIdentity();
  eye.setIdentity();
  const SparseCplx lap = dirichlet_laplacian(mask).cast<cplx>();
  SparseCplx oracle = vol * SparseCplx(Eigen::kroneckerProduct(longi, eye_y)) +
                      (vol / (eps * eps)) * SparseCplx(Eigen::kroneckerProduct(eye_s, lap)) +
                      vol * 1.0 * eye;
  oracle.prune(cplx(0.0), 0.0);
  const SparseCplx& a = p.pencil.a();
  EXPECT_EQ(a.nonZeros(), oracle.nonZeros());
  const double scale = max_abs(oracle);
  EXPECT_LE(max_abs(SparseCplx(a - oracle)), 1e-14 * scale);
  for (Eigen::Index i = 0; i < p.pencil.mass().size(); ++i) EXPECT_DOUBLE_EQ(p.pencil.mass()(i), vol);
}

TEST(AssembleFiber, CurvedTwistedOperatorIsExactlyHermitian) {
  const auto mask = rasterize_section(Disk{0.5}, 1.0 / 20.0);
  const auto p = assemble_fiber(curved_twisted(0.2), mask, 16, 0.37);
  const SparseCplx& a = p.pencil.a();
  EXPECT_EQ(max_abs(SparseCplx(a - SparseCplx(a.adjoint()))), 0.0);
  EXPECT_GT(p.pencil.mass().minCoeff(), 0.0);
  EXPECT_GE(p.min_beta, 0.05);
}

TEST(AssembleFiber, MassIsJacobianTimesCellVolume) {
  const double L = 2 * kPi, eps = 0.2;
  const int ns = 16;
  const auto g = curved_twisted(eps);
  const auto mask = rasterize_section(Rectangle{1.0, 1.0}, 1.0 / 16.0);
  const auto p = assemble_fiber(g, mask, ns, 0.0);
  const double hs = L / ns, vol = hs * mask.h() * mask.h();
  for (int i = 0; i < ns; ++i) {
    const double s = i * hs, al = g.alpha(s);
    for (std::size_t j = 0; j < mask.size(); j += 17) {
      const auto y = mask.position(j);
      const double beta = 1.0 - eps * g.k(s) * (std::cos(al) * y.x() - std::sin(al) * y.y());
      EXPECT_NEAR(p.pencil.mass()(static_cast<Eigen::Index>(i * mask.size() + j)), beta * vol, 1e-15);
    }
  }
}

TEST(AssembleFiber, QuasimomentumEntersOnlyThroughLongitudinalPhases) {
  // 3 x 3 x 3 toy grid: with the Peierls difference the theta dependence is
  // block (i, i+1) -> exp(i theta h_s) block(0), block (i+1, i) -> exp(-i theta h_s) block(0).
  const auto g = curved_twisted(0.2);
  const auto sec = toy_section(0.25);
  const int ns = 3;
  const double L = g.period(), hs = L / ns, theta = kPi / L;
  const Eigen::MatrixXcd a0 = Eigen::MatrixXcd(detail::assemble_fiber_stencil(g, sec, ns, 0.0).pencil.a());
  const auto pt = detail::assemble_fiber_stencil(g, sec, ns, theta);
  const Eigen::MatrixXcd at = Eigen::MatrixXcd(pt.pencil.a());
  const cplx up = std::polar(1.0, theta * hs);
  const double scale = a0.cwiseAbs().maxCoeff();
  for (int bi = 0; bi < ns; ++bi) {
    for (int bj = 0; bj < ns; ++bj) {
      const Eigen::MatrixXcd d = at.block(9 * bi, 9 * bj, 9, 9) - a0.block(9 * bi, 9 * bj, 9, 9);
      Eigen::MatrixXcd expected = Eigen::MatrixXcd::Zero(9, 9);
      if (bj == (bi + 1) % ns) expected = (up - 1.0) * a0.block(9 * bi, 9 * bj, 9, 9);
      if (bi == (bj + 1) % ns) expected = (std::conj(up) - 1.0) * a0.block(9 * bi, 9 * bj, 9, 9);
      EXPECT_LE((d - expected).cwiseAbs().maxCoeff(), 1e-12 * scale) << bi << "," << bj;
    }
  }
  EXPECT_LE((pt.pencil.mass() - detail::assemble_fiber_stencil(g, sec, ns, 0.0).pencil.mass()).norm(), 0.0);
}

TEST(AssembleFiber, RejectsBadGrids) {
  const auto mask = rasterize_section(Rectangle{1.0, 1.0}, 1.0 / 16.0);
  const auto g = straight(2 * kPi, 0.1);
  EXPECT_THROW(assemble_fiber(g, mask, 15, 0.0), ValidationError);
  EXPECT_THROW(assemble_fiber(g, mask, 8, 0.0), ValidationError);
  EXPECT_THROW(assemble_fiber(g, mask, 16, 0.6), ValidationError);
  auto thick = curved_twisted(0.2);
  thick.epsilon = 2.0;
  EXPECT_THROW(assemble_fiber(thick, mask, 16, 0.0), ValidationError);
}

TEST(SolveFiber, SeparableSpectrumMatchesDiscreteSymbol) {
  const double L = 2 * kPi, eps = 0.1, theta = 0.3, c = 1.0;
  const int ns = 32, n = 16;
  const auto mask = rasterize_section(Rectangle{1.0, 1.0}, 1.0 / n);
  const auto p = assemble_fiber(straight(L, eps), mask, ns, theta);
  const auto lam = square_fd_eigenvalues(n);
  const double hs = L / ns;
  std::vector<double> oracle;
  for (int m = -ns / 2; m < ns / 2; ++m) {
    const double q = 2 * kPi * m / L + theta;
    const double symbol = std::pow(2.0 / hs * std::sin(q * hs / 2), 2);
    for (int j = 0; j < 3; ++j) oracle.push_back(symbol + lam[static_cast<std::size_t>(j)] / (eps * eps) + c);
  }
  std::sort(oracle.begin(), oracle.end());
  const auto r = solve_fiber_3d(p, 8, default_fiber_shift(lam[0], eps, c));
  for (std::size_t k = 0; k < 8; ++k) {
    EXPECT_NEAR(r.values[k], oracle[k], 1e-8) << "n = " << k + 1;
    if (k > 0) EXPECT_LE(r.values[k - 1], r.values[k]);
    EXPECT_LE(r.residuals[k], 1e-8);
  }
}

TEST(SolveFiber, TwistedTubeAboveTransverseThresholdAndMatchesDense) {
  const double eps = 0.1;
  const auto mask = rasterize_section(Rectangle{1.0, 1.0}, 1.0 / 16.0);
  const auto spec = solve_section(mask);
  const auto g = twisted(eps);
  const auto r = solve_fiber_3d(assemble_fiber(g, mask, 32, 0.0), 4, default_fiber_shift(spec.lambda0, eps, g.c));
  EXPECT_TRUE(std::isfinite(r.values[0]));
  EXPECT_GT(r.values[0], spec.lambda0 / (eps * eps));

  // Coarse longitudinal grid: sparse shift-invert against the dense reference path.
  const auto coarse = detail::assemble_fiber_stencil(g, SectionStencil::from_mask(mask), 4, 0.0);
  numerics::SparseEigenOptions opt;
  opt.dense_crossover = 0;
  const auto sparse = solve_fiber_3d(coarse, 4, default_fiber_shift(spec.lambda0, eps, g.c), opt);
  const auto dense = numerics::eig_pencil_dense(coarse.pencil, 4);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(sparse.values[k], dense.values[k], 1e-8 * dense.values[k]);
  EXPECT_GT(sparse.values[0], spec.lambda0 / (eps * eps));
}

TEST(SolveFiber, EnergiesAreEvenInQuasimomentum) {
  const double eps = 0.2;
  const auto mask = rasterize_section(Rectangle{1.0, 1.0}, 1.0 / 16.0);
  const auto g = curved_twisted(eps);
  const double shift = default_fiber_shift(2 * kPi * kPi, eps, g.c) - 20.0;
  for (double theta : {0.15, 0.4}) {
    const auto a = solve_fiber_3d(assemble_fiber(g, mask, 16, theta), 4, shift);
    const auto b = solve_fiber_3d(assemble_fiber(g, mask, 16, -theta), 4, shift);
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(a.values[k], b.values[k], 1e-8 * a.values[k]);
  }
}

TEST(SolveFiber, GroundEnergyStableUnderGridRefinement) {
  const double eps = 0.2;
  const auto g = twisted(eps);
  const auto coarse_mask = rasterize_section(Rectangle{1.0, 1.0}, 1.0 / 16.0);
  const auto fine_mask = rasterize_section(Rectangle{1.0, 1.0}, 1.0 / 32.0);
  const double shift = default_fiber_shift(2 * kPi * kPi * 0.99, eps, g.c);
  const double e_coarse = solve_fiber_3d(assemble_fiber(g, coarse_mask, 32, 0.0), 1, shift).values[0];
  const double e_fine = solve_fiber_3d(assemble_fiber(g, fine_mask, 64, 0.0), 1, shift).values[0];
  EXPECT_LE(std::abs(e_coarse - e_fine), 0.01 * e_fine);
}

TEST(Reduction, StraightTubeIsExact) {
  const auto mask = rasterize_section(Rectangle{1.0, 1.0}, 1.0 / 16.0);
  const double L = 2 * kPi;
  ReductionOptions opt;
  opt.ns = 32;
  const auto rep = validate_reduction(straight(L, 0.2), mask, {0.2, 0.1}, {0.0, kPi / (2 * L), kPi / L}, 3, opt);
  ASSERT_EQ(rep.rows.size(), 18u);
  for (const auto& row : rep.rows) EXPECT_LE(row.deviation, 1e-8) << row.epsilon << " " << row.theta << " " << row.n;
  EXPECT_EQ(rep.slopes.size(), 9u);
  EXPECT_GT(rep.constants.c_grid, 0.0);
  EXPECT_NEAR(rep.constants.p_grid, 0.0, 1e-12);  // real u0 and skew Phi
}

TEST(Reduction, ReportsNoSlopesForSingleEpsilon) {
  const auto mask = rasterize_section(Rectangle{1.0, 1.0}, 1.0 / 16.0);
  ReductionOptions opt;
  opt.ns = 16;
  const auto rep = validate_reduction(straight(2 * kPi, 0.2), mask, {0.2}, {0.0}, 2, opt);
  EXPECT_EQ(rep.rows.size(), 2u);
  EXPECT_TRUE(rep.slopes.empty());
  for (const auto& row : rep.rows) EXPECT_TRUE(std::isfinite(row.deviation));
}

TEST(Reduction, RejectsBadEpsilonLists) {
  const auto mask = rasterize_section(Rectangle{1.0, 1.0}, 1.0 / 16.0);
  const auto g = straight(2 * kPi, 0.2);
  EXPECT_THROW(validate_reduction(g, mask, {0.1, 0.2}, {0.0}, 1), ValidationError);
  EXPECT_THROW(validate_reduction(g, mask, {1e-4}, {0.0}, 1), ValidationError);
  EXPECT_THROW(validate_reduction(g, mask, {}, {0.0}, 1), ValidationError);
}

TEST(SpectrumUnion, OutputIsDisjointAndSorted) {
  const std::vector<std::vector<double>> e{{1.0, 5.0, 2.0}, {1.5, 6.0, 2.2}, {1.2, 5.5, 3.0}};
  const auto u = spectrum_union(e);
  ASSERT_EQ(u.bands.size(), 3u);
  EXPECT_DOUBLE_EQ(u.bands[0].lo, 1.0);
  EXPECT_DOUBLE_EQ(u.bands[0].hi, 1.5);
  ASSERT_EQ(u.merged.size(), 3u);
  for (std::size_t i = 0; i + 1 < u.merged.size(); ++i) EXPECT_LT(u.merged[i].hi, u.merged[i + 1].lo);
  ASSERT_EQ(u.gaps.size(), 2u);
  EXPECT_DOUBLE_EQ(u.gaps[0].lo, 1.5);
  EXPECT_DOUBLE_EQ(u.gaps[0].hi, 2.0);
  EXPECT_THROW(spectrum_union({}), ValidationError);
  EXPECT_THROW(spectrum_union({{1.0, 2.0}, {1.0}}), ValidationError);
}

TEST(SpectrumUnion, StraightTubeBandsCoverLongitudinalContinuum) {
  const double L = 2 * kPi, eps = 0.1;
  const auto mask = rasterize_section(Rectangle{1.0, 1.0}, 1.0 / 16.0);
  const auto spec = solve_section(mask);
  ReductionOptions opt;
  opt.ns = 64;
  std::vector<double> thetas;
  for (int q = 0; q <= 8; ++q) thetas.push_back(kPi / L * q / 8);
  const auto u = spectrum_union(fiber_sweep(straight(L, eps), mask, spec.lambda0, thetas, 5, opt));
  const double base = spec.lambda0 / (eps * eps) + 1.0;
  ASSERT_FALSE(u.merged.empty());
  EXPECT_NEAR(u.merged.front().lo, base, 1e-8);
  EXPECT_GE(u.merged.front().hi, base + std::pow(2 * kPi / L, 2) * 4);
}

TEST(SpectrumUnion, TwistedTubeOpensFirstGapAtOneDimensionalLocation) {
  // tau = 1 + 0.5 cos s: the twist rate has a first Fourier mode, so V has nu_1 != 0.
  const double L = 2 * kPi, eps = 0.1;
  const auto g = tube(L, eps, {{0, 0.0}}, {{0, 1.0}, {1, 0.25}}, {{0, 0.0}});
  const auto mask = rasterize_section(Rectangle{1.0, 1.0}, 1.0 / 16.0);
  const auto spec = solve_section(mask);
  const auto sc = section_constants(spec);
  ReductionOptions opt;
  opt.ns = 32;
  const std::vector<double> thetas{0.0, kPi / (2 * L), kPi / L};
  const auto u = spectrum_union(fiber_sweep(g, mask, spec.lambda0, thetas, 2, opt));
  ASSERT_EQ(u.gaps.size(), 1u);
  const double base = spec.lambda0 / (eps * eps);
  const auto k_edge = reference_kappa(g, sc, opt.ns, kPi / L, 2);
  EXPECT_GT(u.gaps[0].length(), 0.05);
  EXPECT_NEAR(u.gaps[0].lo - base, k_edge[0], 1e-2);
  EXPECT_NEAR(u.gaps[0].hi - base, k_edge[1], 1e-2);
}
