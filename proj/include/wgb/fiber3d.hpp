/**
 * @file fiber3d.hpp
 * @brief Full fiber operator T_eps^theta on (0, L) x S and the check of the
 *        reduction E_n(eps, theta) = lambda_0 / eps^2 + kappa_n(theta) + O(eps).
 *
 * The quadratic form
 *   t(phi) = int (1/beta) |(-i d_s^R + theta) phi|^2 + (beta/eps^2) |grad_y phi|^2 + c beta |phi|^2
 * with d_s^R phi = phi' + (tau + alpha') <grad_y phi, R y> is discretized on
 * a periodic s-grid times the section lattice. Unknown (i, j) has index
 * i * n_y + j. The longitudinal difference on the s-edge (i, i+1) carries
 * the Peierls phase exp(+-i theta h_s / 2), which keeps the exact symmetry
 * of the continuum problem at theta = pi/L. The mass is diag(beta vol),
 * vol = h_s h^2.
 */
#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <vector>

#include "wgb/cross_section.hpp"
#include "wgb/effective1d.hpp"
#include "wgb/errors.hpp"
#include "wgb/geometry.hpp"
#include "wgb/numerics/dense.hpp"
#include "wgb/numerics/sparse.hpp"
#include "wgb/parallel.hpp"

namespace wgb {

using SparseCplx = numerics::SparseMat<cplx>;

/// Section data needed by the 3D stencil: positions, arm neighbours and arm lengths.
struct SectionStencil {
  double h = 0.0;
  std::vector<Eigen::Vector2d> position;
  std::vector<std::array<int, 4>> neighbor;
  std::vector<std::array<double, 4>> arm;
  SparseReal angular;  ///< Phi = y1 G2 - y2 G1

  std::size_t size() const { return position.size(); }

  static SectionStencil from_mask(const SectionMask& mask) {
    SectionStencil s;
    s.h = mask.h();
    for (std::size_t k = 0; k < mask.size(); ++k) {
      s.position.push_back(mask.position(k));
      s.neighbor.push_back(mask.nodes()[k].neighbor);
      s.arm.push_back(mask.nodes()[k].arm);
    }
    s.angular = angular_operator(mask);
    return s;
  }
};

/// Discretized fiber pencil (A, M) at fixed (eps, theta).
struct FiberProblem {
  numerics::SparseHermitianPencil<cplx> pencil;
  double epsilon = 0.0;
  double theta = 0.0;
  int ns = 0;
  std::size_t section_size = 0;
  double offset = 0.0;  ///< A was assembled as A - offset M; eigenvalues are reported with it added back
  double min_beta = 0.0;
};

namespace detail {

inline double beta_at(double eps, double k, double alpha, const Eigen::Vector2d& y) {
  return 1.0 - eps * k * (std::cos(alpha) * y.x() - std::sin(alpha) * y.y());
}

/**
 * Assembly without the size floors of the public entry point (used for
 * tiny oracle grids in tests). ns >= 3.
 */
inline FiberProblem assemble_fiber_stencil(const WaveguideGeometry& g, const SectionStencil& sec,
                                           int ns, double theta, double offset = 0.0) {
  if (ns < 3) throw ValidationError("assemble_fiber: at least 3 longitudinal nodes required");
  const double L = g.period();
  const double eps = g.epsilon;
  const double hs = L / ns;
  const double h = sec.h;
  const double vol = hs * h * h;
  const auto ny = static_cast<int>(sec.size());
  const int dim = ns * ny;
  const PeriodicProfile rate = twist_rate(g);
  const cplx ph = std::polar(1.0, theta * hs / 2.0);

  double min_beta = INFINITY;
  auto track = [&](double b) {
    min_beta = std::min(min_beta, b);
    return b;
  };

  // Longitudinal part: D = S (x) I + diag(t_mid) Av (x) Phi, weighted by vol / beta at (s_mid, y_j).
  std::vector<Eigen::Triplet<cplx>> dt;
  dt.reserve(static_cast<std::size_t>(dim) * (2 + 2 * 5));
  Eigen::VectorXd wlong(dim);
  for (int i = 0; i < ns; ++i) {
    const int ip = (i + 1) % ns;
    const double sm = (i + 0.5) * hs;
    const double tm = rate.value(sm);
    const double km = g.k.value(sm);
    const double am = g.alpha.value(sm);
    for (int j = 0; j < ny; ++j) {
      const int row = i * ny + j;
      dt.emplace_back(row, ip * ny + j, ph / hs);
      dt.emplace_back(row, i * ny + j, -std::conj(ph) / hs);
      wlong(row) = vol / track(beta_at(eps, km, am, sec.position[static_cast<std::size_t>(j)]));
    }
    if (tm != 0.0) {
      for (int col = 0; col < sec.angular.outerSize(); ++col) {
        for (SparseReal::InnerIterator it(sec.angular, col); it; ++it) {
          const int j = static_cast<int>(it.row());
          const int l = static_cast<int>(it.col());
          const double f = tm * it.value() / 2.0;
          dt.emplace_back(i * ny + j, ip * ny + l, f * ph);
          dt.emplace_back(i * ny + j, i * ny + l, f * std::conj(ph));
        }
      }
    }
  }
  SparseCplx d(dim, dim);
  d.setFromTriplets(dt.begin(), dt.end());
  SparseCplx wd = wlong.cast<cplx>().asDiagonal() * d;
  SparseCplx a = SparseCplx(d.adjoint()) * wd;

  // Transverse part and mass.
  std::vector<Eigen::Triplet<cplx>> tt;
  tt.reserve(static_cast<std::size_t>(dim) * 5);
  Eigen::VectorXd mass(dim);
  const double inv_eps2 = 1.0 / (eps * eps);
  for (int i = 0; i < ns; ++i) {
    const double s = i * hs;
    const double k = g.k.value(s);
    const double al = g.alpha.value(s);
    for (int j = 0; j < ny; ++j) {
      const auto& yj = sec.position[static_cast<std::size_t>(j)];
      const int row = i * ny + j;
      mass(row) = vol * track(beta_at(eps, k, al, yj));
      double diag = g.c * mass(row) - offset * mass(row);
      for (std::size_t arm = 0; arm < 4; ++arm) {
        const int nb = sec.neighbor[static_cast<std::size_t>(j)][arm];
        const Eigen::Vector2d dir(kArms[arm][0], kArms[arm][1]);
        if (nb >= 0) {
          if (arm % 2 == 1) continue;  // each interior edge once, from its lower end
          const auto& yl = sec.position[static_cast<std::size_t>(nb)];
          const double w = vol * inv_eps2 * track(beta_at(eps, k, al, 0.5 * (yj + yl))) / (h * h);
          diag += w;
          tt.emplace_back(row, i * ny + nb, -w);
          tt.emplace_back(i * ny + nb, row, -w);
          tt.emplace_back(i * ny + nb, i * ny + nb, w);
        } else {
          const double delta = sec.arm[static_cast<std::size_t>(j)][arm];
          const double b = track(beta_at(eps, k, al, yj + 0.5 * delta * dir));
          diag += vol * inv_eps2 * b / (h * delta);
        }
      }
      tt.emplace_back(row, row, diag);
    }
  }
  SparseCplx t(dim, dim);
  t.setFromTriplets(tt.begin(), tt.end());
  a += t;
  // Exact Hermitian symmetry (the sparse product sums in different orders).
  SparseCplx herm = 0.5 * (a + SparseCplx(a.adjoint()));
  herm.prune(cplx(0.0), 0.0);
  if (!(min_beta > 0.0)) {
    throw ValidationError("assemble_fiber: metric factor beta is not positive on the grid");
  }
  return FiberProblem{numerics::SparseHermitianPencil<cplx>(std::move(herm), std::move(mass)),
                      eps, theta, ns, sec.size(), offset, min_beta};
}

}  // namespace detail

/**
 * Fiber pencil at quasimomentum theta. Requires validate_thickness to pass
 * for the mask radius, ns >= 16 and even, |theta| <= pi/L. With `offset`
 * the operator is assembled as A - offset M (eigenvalues are reported
 * with the offset added back).
 */
inline FiberProblem assemble_fiber(const WaveguideGeometry& g, const SectionMask& mask, int ns,
                                   double theta, double offset = 0.0) {
  if (ns < 16 || ns % 2 != 0) {
    throw ValidationError("assemble_fiber: N_s must be even and >= 16, got " + std::to_string(ns));
  }
  if (std::abs(theta) > std::numbers::pi / g.period() * (1.0 + 1e-12)) {
    throw ValidationError("assemble_fiber: |theta| must not exceed pi/L");
  }
  if (!validate_thickness(g, mask.radius())) {
    std::ostringstream os;
    os << "assemble_fiber: eps max|k| radius = " << g.epsilon * g.k.max_abs() * mask.radius()
       << " violates the thickness margin (must be < 0.95)";
    throw ValidationError(os.str());
  }
  auto p = detail::assemble_fiber_stencil(g, SectionStencil::from_mask(mask), ns, theta, offset);
  if (p.min_beta < 0.05) throw ValidationError("assemble_fiber: min beta below 0.05");
  return p;
}

struct FiberSolution {
  std::vector<double> values;  ///< ascending, offset included
  std::vector<double> residuals;
  double shift = 0.0;
};

/// Shift safely below E_1: lambda_0 / eps^2 - max(1, c).
inline double default_fiber_shift(double lambda0, double eps, double c) {
  return lambda0 / (eps * eps) - std::max(1.0, c);
}

/**
 * n_max smallest eigenvalues of the pencil (A, M). `shift` is in the same
 * (unshifted) energy units as the result; it is lowered automatically if
 * A - shift M is indefinite.
 */
inline FiberSolution solve_fiber_3d(const FiberProblem& p, int n_max, double shift,
                                    const numerics::SparseEigenOptions& opt = {}) {
  if (n_max < 1 || n_max > p.pencil.dim()) {
    throw ValidationError("solve_fiber_3d: n_max outside [1, dim]");
  }
  const auto r = numerics::eig_pencil_smallest(p.pencil, n_max, shift - p.offset, opt);
  FiberSolution out;
  for (double e : r.values) out.values.push_back(e + p.offset);
  out.residuals = r.residuals;
  out.shift = r.shift + p.offset;
  for (double res : out.residuals) {
    if (!(res <= std::max(opt.tol, 1e-8) * 10.0)) {
      throw SolverError("solve_fiber_3d: residual above tolerance", out.residuals);
    }
  }
  return out;
}

/**
 * Grid-consistent transverse constants: lambda_0 of the section Laplacian,
 * C_grid = h^2 |Phi u0|^2 and p = h^2 <u0, Phi u0> with the same Phi the
 * 3D stencil uses.
 */
struct SectionConstants {
  double lambda0 = 0.0;
  double c_grid = 0.0;
  double p_grid = 0.0;
};

inline SectionConstants section_constants(const SectionSpectrum& spec) {
  const SparseReal phi = angular_operator(spec.mask);
  const Eigen::VectorXd pu = phi * spec.u0;
  const double h2 = spec.mask.h() * spec.mask.h();
  return {spec.lambda0, h2 * pu.squaredNorm(), h2 * spec.u0.dot(pu)};
}

/**
 * 1D reference on the same s-grid: K = S^H S + C Av^H diag(t^2) Av
 * + p (S^H T Av + Av^H T S) + diag(c - k^2/4), with S the Peierls
 * difference and Av the phased average over s-edges. Dropping the twist
 * terms (with_twist = false) gives the ablated reference.
 */
inline std::vector<double> reference_kappa(const WaveguideGeometry& g, const SectionConstants& sc,
                                           int ns, double theta, int n_max, bool with_twist = true) {
  const double L = g.period();
  const double hs = L / ns;
  const cplx ph = std::polar(1.0, theta * hs / 2.0);
  const PeriodicProfile rate = twist_rate(g);
  numerics::DenseMat<cplx> s = numerics::DenseMat<cplx>::Zero(ns, ns);
  numerics::DenseMat<cplx> av = numerics::DenseMat<cplx>::Zero(ns, ns);
  Eigen::VectorXd t(ns);
  for (int i = 0; i < ns; ++i) {
    const int ip = (i + 1) % ns;
    s(i, ip) += ph / hs;
    s(i, i) -= std::conj(ph) / hs;
    av(i, ip) += ph / 2.0;
    av(i, i) += std::conj(ph) / 2.0;
    t(i) = rate.value((i + 0.5) * hs);
  }
  numerics::DenseMat<cplx> k = s.adjoint() * s;
  if (with_twist) {
    const Eigen::VectorXcd tc = t.cast<cplx>();
    const Eigen::VectorXcd t2 = t.cwiseAbs2().cast<cplx>();
    k += sc.c_grid * (av.adjoint() * t2.asDiagonal() * av);
    numerics::DenseMat<cplx> cross = s.adjoint() * tc.asDiagonal() * av;
    k += sc.p_grid * (cross + cross.adjoint());
  }
  for (int i = 0; i < ns; ++i) {
    const double kv = g.k.value(i * hs);
    k(i, i) += g.c - 0.25 * kv * kv;
  }
  k = (0.5 * (k + k.adjoint())).eval();
  const auto r = numerics::eigh_dense(numerics::DenseHermitian<cplx>(k), n_max);
  return {r.values.data(), r.values.data() + r.values.size()};
}

struct ReductionOptions {
  int ns = 64;
  unsigned workers = 1;
  numerics::SparseEigenOptions eig{};
};

struct ReductionRow {
  double epsilon = 0.0;
  double theta = 0.0;
  int n = 0;
  double energy = 0.0;
  double reference = 0.0;
  double deviation = 0.0;
  double ablation_reference = 0.0;
  double ablation_deviation = 0.0;
};

/// Per (theta, n): log-log slope of d vs eps and d(eps_1)/d(eps_2) for the first two eps values.
struct ReductionSlope {
  double theta = 0.0;
  int n = 0;
  double slope = std::numeric_limits<double>::quiet_NaN();
  double decay_ratio = std::numeric_limits<double>::quiet_NaN();
  double ablation_ratio = std::numeric_limits<double>::quiet_NaN();
};

struct ReductionReport {
  SectionConstants constants;
  std::vector<ReductionRow> rows;
  std::vector<ReductionSlope> slopes;  ///< empty when fewer than 2 eps values
};

/// Energies E_n(eps, theta), n = 1..n_max, for each theta in the list.
inline std::vector<std::vector<double>> fiber_sweep(const WaveguideGeometry& g,
                                                    const SectionMask& mask, double lambda0,
                                                    const std::vector<double>& thetas, int n_max,
                                                    const ReductionOptions& opt = {}) {
  std::vector<std::vector<double>> out(thetas.size());
  parallel_for(thetas.size(), opt.workers, [&](std::size_t q) {
    const auto p = assemble_fiber(g, mask, opt.ns, thetas[q]);
    out[q] = solve_fiber_3d(p, n_max, default_fiber_shift(lambda0, g.epsilon, g.c), opt.eig).values;
  });
  return out;
}

/**
 * d_n(eps, theta) = |E_n - lambda_0^FD / eps^2 - kappa_n(theta)| with the
 * grid-consistent reference, plus the same quantity against the reference
 * without the twist terms.
 */
inline ReductionReport validate_reduction(const WaveguideGeometry& g, const SectionMask& mask,
                                          const std::vector<double>& eps_list,
                                          const std::vector<double>& thetas, int n_max,
                                          const ReductionOptions& opt = {}) {
  if (eps_list.empty() || thetas.empty()) {
    throw ValidationError("validate_reduction: eps and theta lists must be nonempty");
  }
  if (n_max < 1) throw ValidationError("validate_reduction: n_max must be >= 1");
  for (std::size_t e = 1; e < eps_list.size(); ++e) {
    if (!(eps_list[e] < eps_list[e - 1])) {
      throw ValidationError("validate_reduction: eps list must be strictly descending");
    }
  }
  const auto spec = solve_section(mask, opt.eig);
  const auto sc = section_constants(spec);
  for (double eps : eps_list) {
    if (!(eps > 0.0)) throw ValidationError("validate_reduction: eps must be > 0");
    if (sc.lambda0 / (eps * eps) > 1e8) {
      throw ValidationError("validate_reduction: lambda_0 / eps^2 exceeds 1e8");
    }
  }

  ReductionReport rep;
  rep.constants = sc;
  const std::size_t ne = eps_list.size(), nt = thetas.size();
  std::vector<std::vector<double>> energy(ne * nt), ref(nt), abl(nt);
  parallel_for(ne * nt + nt, opt.workers, [&](std::size_t task) {
    if (task < ne * nt) {
      const std::size_t e = task / nt, q = task % nt;
      WaveguideGeometry ge = g;
      ge.epsilon = eps_list[e];
      const auto p = assemble_fiber(ge, mask, opt.ns, thetas[q]);
      energy[task] =
          solve_fiber_3d(p, n_max, default_fiber_shift(sc.lambda0, ge.epsilon, ge.c), opt.eig).values;
    } else {
      const std::size_t q = task - ne * nt;
      ref[q] = reference_kappa(g, sc, opt.ns, thetas[q], n_max, true);
      abl[q] = reference_kappa(g, sc, opt.ns, thetas[q], n_max, false);
    }
  });
  for (std::size_t e = 0; e < ne; ++e) {
    const double base = sc.lambda0 / (eps_list[e] * eps_list[e]);
    for (std::size_t q = 0; q < nt; ++q) {
      for (int n = 0; n < n_max; ++n) {
        const auto ni = static_cast<std::size_t>(n);
        ReductionRow row;
        row.epsilon = eps_list[e];
        row.theta = thetas[q];
        row.n = n + 1;
        row.energy = energy[e * nt + q][ni];
        row.reference = base + ref[q][ni];
        row.deviation = std::abs(row.energy - row.reference);
        row.ablation_reference = base + abl[q][ni];
        row.ablation_deviation = std::abs(row.energy - row.ablation_reference);
        rep.rows.push_back(row);
      }
    }
  }
  if (ne >= 2) {
    auto at = [&](std::size_t e, std::size_t q, int n) -> const ReductionRow& {
      return rep.rows[(e * nt + q) * static_cast<std::size_t>(n_max) + static_cast<std::size_t>(n)];
    };
    for (std::size_t q = 0; q < nt; ++q) {
      for (int n = 0; n < n_max; ++n) {
        ReductionSlope sl;
        sl.theta = thetas[q];
        sl.n = n + 1;
        const auto& first = at(0, q, n);
        const auto& second = at(1, q, n);
        const auto& last = at(ne - 1, q, n);
        sl.decay_ratio = first.deviation / second.deviation;
        sl.ablation_ratio = first.ablation_deviation / second.ablation_deviation;
        sl.slope = std::log(first.deviation / last.deviation) /
                   std::log(first.epsilon / last.epsilon);
        rep.slopes.push_back(sl);
      }
    }
  }
  return rep;
}

/// Union of bands: per-n range over theta, merged into disjoint sorted intervals.
struct SpectrumUnion {
  std::vector<Interval> bands;   ///< index n - 1
  std::vector<Interval> merged;  ///< disjoint, ascending
  std::vector<Interval> gaps;    ///< complement between consecutive merged intervals
};

/**
 * energies[q][n - 1] = E_n at the q-th theta. Intervals closer than
 * tol * max(1, |E|) are merged.
 */
inline SpectrumUnion spectrum_union(const std::vector<std::vector<double>>& energies,
                                    double tol = 1e-9) {
  if (energies.empty() || energies.front().empty()) {
    throw ValidationError("spectrum_union: empty sweep");
  }
  const std::size_t nb = energies.front().size();
  SpectrumUnion out;
  out.bands.assign(nb, Interval{INFINITY, -INFINITY});
  for (const auto& row : energies) {
    if (row.size() != nb) throw ValidationError("spectrum_union: ragged sweep");
    for (std::size_t n = 0; n < nb; ++n) {
      out.bands[n].lo = std::min(out.bands[n].lo, row[n]);
      out.bands[n].hi = std::max(out.bands[n].hi, row[n]);
    }
  }
  std::vector<Interval> sorted = out.bands;
  std::sort(sorted.begin(), sorted.end(),
            [](const Interval& a, const Interval& b) { return a.lo < b.lo || (a.lo == b.lo && a.hi < b.hi); });
  for (const auto& iv : sorted) {
    if (!out.merged.empty() &&
        iv.lo <= out.merged.back().hi + tol * std::max(1.0, std::abs(out.merged.back().hi))) {
      out.merged.back().hi = std::max(out.merged.back().hi, iv.hi);
    } else {
      out.merged.push_back(iv);
    }
  }
  for (std::size_t i = 0; i + 1 < out.merged.size(); ++i) {
    out.gaps.push_back({out.merged[i].hi, out.merged[i + 1].lo});
  }
  return out;
}

}  // namespace wgb
