/**
 * @file effective1d.hpp
 * @brief Effective potential V(s), Floquet fibers T^theta, bands, gaps and
 *        the Fourier-coefficient gap asymptotics.
 *
 * Conventions. V(s) = sum_n (1/sqrt(L)) nu_n exp(2 pi i n s / L). The fiber
 * T^theta w = (-i d/ds + theta)^2 w + V w with periodic conditions is
 * discretized in the plane-wave basis e_n = exp(2 pi i n s / L) / sqrt(L),
 * |n| <= N, where <e_m, V e_n> = nu_{m-n} / sqrt(L).
 */
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <vector>

#include "wgb/errors.hpp"
#include "wgb/geometry.hpp"
#include "wgb/numerics/dense.hpp"
#include "wgb/numerics/fft.hpp"
#include "wgb/parallel.hpp"

namespace wgb {

using cplx = std::complex<double>;

/**
 * nu_n for n = -M/2..M/2 (index n + M/2) from M uniform samples on [0, L):
 * nu_n = (1/sqrt(L)) (L/M) sum_j V(s_j) exp(-2 pi i n s_j / L).
 * The Nyquist coefficient is split evenly between n = +-M/2, which keeps
 * nu_{-n} = conj(nu_n) exactly.
 */
inline std::vector<cplx> fourier_coefficients(std::span<const double> samples, double period) {
  if (!(period > 0.0)) throw ValidationError("fourier_coefficients: period must be > 0");
  const auto x = numerics::fft_periodic(samples);
  const long m = static_cast<long>(samples.size());
  const long half = m / 2;
  const double scale = std::sqrt(period) / static_cast<double>(m);
  std::vector<cplx> nu(static_cast<std::size_t>(m + 1));
  for (long n = -half; n <= half; ++n) {
    const long idx = ((n % m) + m) % m;
    cplx v = scale * x[static_cast<std::size_t>(idx)];
    if (half > 0 && (n == half || n == -half)) v *= 0.5;
    nu[static_cast<std::size_t>(n + half)] = v;
  }
  // Enforce exact conjugate symmetry (the FFT output is symmetric up to roundoff).
  for (long n = 1; n <= half; ++n) {
    const cplx a = nu[static_cast<std::size_t>(half + n)];
    const cplx b = nu[static_cast<std::size_t>(half - n)];
    const cplx sym = 0.5 * (a + std::conj(b));
    nu[static_cast<std::size_t>(half + n)] = sym;
    nu[static_cast<std::size_t>(half - n)] = std::conj(sym);
  }
  nu[static_cast<std::size_t>(half)] = nu[static_cast<std::size_t>(half)].real();
  return nu;
}

/// Sampled L-periodic potential with its Fourier coefficients.
class EffectivePotential {
 public:
  /// M uniform samples on [0, L); M must be a power of two >= 64.
  static EffectivePotential from_samples(double period, std::vector<double> samples) {
    if (samples.size() < 64) {
      throw ValidationError("EffectivePotential: at least 64 samples required");
    }
    numerics::require_power_of_two(samples.size(), "EffectivePotential");
    for (double v : samples) {
      if (!std::isfinite(v)) throw ValidationError("EffectivePotential: non-finite sample");
    }
    EffectivePotential p;
    p.period_ = period;
    p.nu_ = fourier_coefficients(samples, period);
    p.samples_ = std::move(samples);
    return p;
  }

  static EffectivePotential from_function(double period, std::size_t count,
                                          const std::function<double(double)>& f) {
    std::vector<double> v(count);
    for (std::size_t j = 0; j < count; ++j) {
      v[j] = f(period * static_cast<double>(j) / static_cast<double>(count));
    }
    return from_samples(period, std::move(v));
  }

  static EffectivePotential constant(double period, double value, std::size_t count = 256) {
    return from_samples(period, std::vector<double>(count, value));
  }

  double period() const noexcept { return period_; }
  std::size_t size() const noexcept { return samples_.size(); }
  const std::vector<double>& samples() const noexcept { return samples_; }
  int max_index() const noexcept { return static_cast<int>(samples_.size() / 2); }

  /// nu_n, or 0 for |n| > M/2.
  cplx coefficient(int n) const {
    const int half = max_index();
    if (n < -half || n > half) return 0.0;
    return nu_[static_cast<std::size_t>(n + half)];
  }

  double min_value() const { return *std::min_element(samples_.begin(), samples_.end()); }

  /// sum_j V(s_j)^2 L / M.
  double l2_norm_squared() const {
    double s = 0.0;
    for (double v : samples_) s += v * v;
    return s * period_ / static_cast<double>(samples_.size());
  }

  /// sum of |nu_n|^2 over one full period of indices (the split Nyquist pair counted once).
  double coefficient_norm_squared() const {
    const int half = max_index();
    double s = 0.0;
    for (int n = -half + 1; n < half; ++n) s += std::norm(coefficient(n));
    s += std::norm(coefficient(half) + coefficient(-half));
    return s;
  }

  EffectivePotential shifted(double a) const {
    auto v = samples_;
    for (auto& x : v) x += a;
    return from_samples(period_, std::move(v));
  }

  EffectivePotential scaled(double f) const {
    auto v = samples_;
    for (auto& x : v) x *= f;
    return from_samples(period_, std::move(v));
  }

 private:
  EffectivePotential() = default;
  double period_ = 1.0;
  std::vector<double> samples_;
  std::vector<cplx> nu_;
};

/**
 * V(s_j) = C_S (tau + alpha')^2(s_j) + c - k(s_j)^2 / 4 on M uniform samples.
 * Throws if C_S < 0 or if min V <= 0 (which the standing assumption on c excludes).
 */
inline EffectivePotential effective_potential(const WaveguideGeometry& g, double c_s,
                                              std::size_t m = 256) {
  if (!(c_s >= 0.0) || !std::isfinite(c_s)) {
    throw ValidationError("effective_potential: C(S) must be >= 0");
  }
  numerics::require_power_of_two(m, "effective_potential");
  const auto rate = twist_rate(g).sample(m);
  const auto k = g.k.sample(m);
  std::vector<double> v(m);
  for (std::size_t j = 0; j < m; ++j) v[j] = c_s * rate[j] * rate[j] + g.c - 0.25 * k[j] * k[j];
  auto out = EffectivePotential::from_samples(g.period(), std::move(v));
  if (!(out.min_value() > 0.0)) {
    throw ValidationError("effective_potential: min V <= 0; check c > max k^2/4");
  }
  return out;
}

enum class Boundary { periodic, antiperiodic };

/// Plane-wave matrix of T^theta; basis index n + N for n = -N..N.
struct FloquetMatrix {
  double theta = 0.0;
  int half_width = 0;
  Boundary bc = Boundary::periodic;
  numerics::DenseHermitian<cplx> matrix;
};

/**
 * Periodic: diagonal (2 pi n / L + theta)^2 + nu_0/sqrt(L). Antiperiodic:
 * theta is ignored and the wavenumbers are (2n + 1) pi / L. Off-diagonal
 * (m, n) entries are nu_{m-n}/sqrt(L). Coefficients beyond |n| = M/2 are
 * taken as 0 only if the stored tail (M/4 < |n| <= M/2) is below 1e-13
 * relative to max(1, |nu_0|/sqrt(L)).
 */
inline FloquetMatrix assemble_floquet(const EffectivePotential& v, double theta, int half_width,
                                      Boundary bc = Boundary::periodic) {
  const double L = v.period();
  if (half_width < 1) throw ValidationError("assemble_floquet: basis half-width must be >= 1");
  if (bc == Boundary::periodic && std::abs(theta) > std::numbers::pi / L * (1.0 + 1e-12)) {
    throw ValidationError("assemble_floquet: |theta| must not exceed pi/L");
  }
  const double inv_sqrt_l = 1.0 / std::sqrt(L);
  if (2 * half_width > v.max_index()) {
    double tail = 0.0;
    for (int n = v.max_index() / 2 + 1; n <= v.max_index(); ++n) {
      tail = std::max(tail, std::abs(v.coefficient(n)) * inv_sqrt_l);
    }
    const double ref = std::max(1.0, std::abs(v.coefficient(0)) * inv_sqrt_l);
    if (tail > 1e-13 * ref) {
      std::ostringstream os;
      os << "assemble_floquet: basis half-width " << half_width << " needs coefficients up to |n| = "
         << 2 * half_width << " but only " << v.max_index()
         << " are stored and the tail is not negligible (" << tail
         << "); increase the sample count M";
      throw ValidationError(os.str());
    }
  }
  const double shift = bc == Boundary::periodic ? theta : std::numbers::pi / L;
  const int dim = 2 * half_width + 1;
  numerics::DenseMat<cplx> a(dim, dim);
  for (int r = 0; r < dim; ++r) {
    for (int c = 0; c < dim; ++c) a(r, c) = v.coefficient(r - c) * inv_sqrt_l;
  }
  for (int r = 0; r < dim; ++r) {
    const double q = 2.0 * std::numbers::pi * (r - half_width) / L + shift;
    a(r, r) = q * q + v.coefficient(0).real() * inv_sqrt_l;
  }
  return {bc == Boundary::periodic ? theta : std::numbers::pi / L, half_width, bc,
          numerics::DenseHermitian<cplx>(std::move(a))};
}

/// The n_max smallest eigenvalues, ascending, multiplicity counted.
inline std::vector<double> solve_fiber_1d(const FloquetMatrix& m, int n_max) {
  if (n_max < 1 || n_max > m.matrix.dim()) {
    throw ValidationError("solve_fiber_1d: n_max must lie in [1, " +
                          std::to_string(m.matrix.dim()) + "]");
  }
  const auto r = numerics::eigh_dense(m.matrix, n_max);
  return {r.values.data(), r.values.data() + r.values.size()};
}

struct BandOptions {
  int half_width = 64;
  int theta_count = 33;
  int n_max = 8;
  unsigned workers = 1;
};

/// kappa(t, n - 1) = kappa_n(thetas[t]) on a uniform grid of [0, pi/L].
struct BandStructure {
  double period = 0.0;
  int n_max = 0;
  std::vector<double> thetas;
  Eigen::MatrixXd kappa;
  /// Largest step against the expected direction (odd n up, even n down), per band.
  std::vector<double> monotonicity_violation;
  /// max |kappa_n(theta) - kappa_n(-theta)| over the spot-checked theta values.
  double evenness_defect = 0.0;

  bool monotone(double tol = 1e-9) const {
    return std::all_of(monotonicity_violation.begin(), monotonicity_violation.end(),
                       [&](double v) { return v <= tol; });
  }
};

inline BandStructure compute_bands(const EffectivePotential& v, const BandOptions& opt = {}) {
  if (opt.theta_count < 9) throw ValidationError("compute_bands: theta_count must be >= 9");
  if (opt.n_max < 1 || opt.n_max > 2 * opt.half_width + 1) {
    throw ValidationError("compute_bands: n_max outside [1, 2N+1]");
  }
  const double L = v.period();
  BandStructure out;
  out.period = L;
  out.n_max = opt.n_max;
  const auto count = static_cast<std::size_t>(opt.theta_count);
  out.thetas.resize(count);
  for (std::size_t t = 0; t < count; ++t) {
    out.thetas[t] = std::numbers::pi / L * static_cast<double>(t) / static_cast<double>(count - 1);
  }
  out.thetas.back() = std::numbers::pi / L;
  out.kappa.resize(opt.theta_count, opt.n_max);

  // Spot checks of evenness at 5 grid points, solved explicitly at -theta.
  std::vector<std::size_t> spots;
  for (int q = 0; q < 5; ++q) spots.push_back(static_cast<std::size_t>(q) * (count - 1) / 4);
  std::vector<double> spot_defect(spots.size(), 0.0);

  const std::size_t tasks = count + spots.size();
  std::vector<std::vector<double>> rows(count), mirrored(spots.size());
  parallel_for(tasks, opt.workers, [&](std::size_t task) {
    if (task < count) {
      rows[task] = solve_fiber_1d(assemble_floquet(v, out.thetas[task], opt.half_width), opt.n_max);
    } else {
      const std::size_t q = task - count;
      mirrored[q] = solve_fiber_1d(assemble_floquet(v, -out.thetas[spots[q]], opt.half_width), opt.n_max);
    }
  });
  for (std::size_t t = 0; t < count; ++t) {
    for (int n = 0; n < opt.n_max; ++n) out.kappa(static_cast<Eigen::Index>(t), n) = rows[t][static_cast<std::size_t>(n)];
  }
  for (std::size_t q = 0; q < spots.size(); ++q) {
    for (int n = 0; n < opt.n_max; ++n) {
      out.evenness_defect =
          std::max(out.evenness_defect, std::abs(mirrored[q][static_cast<std::size_t>(n)] -
                                                 rows[spots[q]][static_cast<std::size_t>(n)]));
    }
  }
  out.monotonicity_violation.assign(static_cast<std::size_t>(opt.n_max), 0.0);
  for (int n = 0; n < opt.n_max; ++n) {
    const double dir = (n % 2 == 0) ? 1.0 : -1.0;  // band index n + 1 odd -> increasing
    for (std::size_t t = 0; t + 1 < count; ++t) {
      const double step = dir * (out.kappa(static_cast<Eigen::Index>(t + 1), n) -
                                 out.kappa(static_cast<Eigen::Index>(t), n));
      out.monotonicity_violation[static_cast<std::size_t>(n)] =
          std::max(out.monotonicity_violation[static_cast<std::size_t>(n)], -step);
    }
  }
  return out;
}

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double length() const { return hi - lo; }
};

/**
 * Bands and gaps from the endpoint spectra. Entry n - 1 describes B_n and
 * G_n. A gap narrower than 1e-9 is reported closed with width 0.
 */
struct GapReport {
  std::vector<double> periodic;      ///< kappa_n(0), n = 1..n_max+1
  std::vector<double> antiperiodic;  ///< kappa_n(pi/L), n = 1..n_max+1
  std::vector<Interval> bands;
  std::vector<std::optional<Interval>> gaps;
  std::vector<double> widths;

  /// kappa_1(0) < kappa_1(pi/L) <= kappa_2(pi/L) < kappa_2(0) <= kappa_3(0) < ...
  bool interlacing(double tol = 1e-9) const {
    for (std::size_t i = 0; i + 1 < periodic.size(); ++i) {
      const bool odd = (i % 2 == 0);
      const double a = odd ? periodic[i] : antiperiodic[i];
      const double b = odd ? antiperiodic[i] : periodic[i];
      const double next = odd ? antiperiodic[i + 1] : periodic[i + 1];
      if (a > b + tol || b > next + tol) return false;
    }
    return true;
  }
};

inline constexpr double kGapThreshold = 1e-9;

inline GapReport compute_gaps(const EffectivePotential& v, int n_max = 8, int half_width = 64) {
  if (n_max < 1 || n_max + 1 > 2 * half_width + 1) {
    throw ValidationError("compute_gaps: n_max + 1 exceeds the basis dimension");
  }
  GapReport r;
  r.periodic = solve_fiber_1d(assemble_floquet(v, 0.0, half_width, Boundary::periodic), n_max + 1);
  r.antiperiodic =
      solve_fiber_1d(assemble_floquet(v, 0.0, half_width, Boundary::antiperiodic), n_max + 1);
  for (int n = 1; n <= n_max; ++n) {
    const auto i = static_cast<std::size_t>(n - 1);
    const bool odd = (n % 2 == 1);
    Interval band = odd ? Interval{r.periodic[i], r.antiperiodic[i]}
                        : Interval{r.antiperiodic[i], r.periodic[i]};
    Interval gap = odd ? Interval{r.antiperiodic[i], r.antiperiodic[i + 1]}
                       : Interval{r.periodic[i], r.periodic[i + 1]};
    r.bands.push_back(band);
    if (gap.length() < kGapThreshold) {
      r.gaps.emplace_back(std::nullopt);
      r.widths.push_back(0.0);
    } else {
      r.gaps.emplace_back(gap);
      r.widths.push_back(gap.length());
    }
  }
  return r;
}

struct OpenGap {
  int n = 0;
  Interval gap;
};

/// Smallest n <= n_max with delta_n > tol; nullopt suggests V is constant.
inline std::optional<OpenGap> first_open_gap(const EffectivePotential& v, double tol = 1e-6,
                                             int n_max = 8, int half_width = 64) {
  const auto r = compute_gaps(v, n_max, half_width);
  for (int n = 1; n <= n_max; ++n) {
    const auto i = static_cast<std::size_t>(n - 1);
    if (r.widths[i] > tol) return OpenGap{n, *r.gaps[i]};
  }
  return std::nullopt;
}

struct SlopeFit {
  int n = 0;
  std::vector<double> mu;
  std::vector<double> delta;
  double fitted = 0.0;     ///< sum mu delta / sum mu^2
  double predicted = 0.0;  ///< (2 / sqrt(L)) |omega_n|
  /// |fitted - predicted| / predicted; NaN when the predicted slope vanishes.
  double relative_deviation = std::numeric_limits<double>::quiet_NaN();
  /// omega_n = 0: the gap opens at second order only.
  bool second_order = false;
};

/**
 * delta_n(mu) for the potential mu W, least-squares slope through the origin,
 * and the first-order prediction from the Fourier coefficient omega_n of W.
 */
inline SlopeFit gap_slope_fit(const EffectivePotential& w, int n, std::span<const double> mu_list,
                              int half_width = 64) {
  if (n < 1) throw ValidationError("gap_slope_fit: gap index must be >= 1");
  if (mu_list.size() < 3) {
    throw ValidationError("gap_slope_fit: at least 3 mu values required, got " +
                          std::to_string(mu_list.size()));
  }
  double lo = INFINITY, hi = 0.0;
  for (double mu : mu_list) {
    if (!(mu > 0.0 && mu <= 0.1)) throw ValidationError("gap_slope_fit: mu values must lie in (0, 0.1]");
    lo = std::min(lo, mu);
    hi = std::max(hi, mu);
  }
  if (hi < 10.0 * lo * (1.0 - 1e-12)) {
    throw ValidationError("gap_slope_fit: mu values must span at least a decade");
  }
  SlopeFit out;
  out.n = n;
  double num = 0.0, den = 0.0;
  for (double mu : mu_list) {
    const auto r = compute_gaps(w.scaled(mu), n, half_width);
    const double d = r.widths[static_cast<std::size_t>(n - 1)];
    out.mu.push_back(mu);
    out.delta.push_back(d);
    num += mu * d;
    den += mu * mu;
  }
  out.fitted = num / den;
  out.predicted = 2.0 / std::sqrt(w.period()) * std::abs(w.coefficient(n));
  out.second_order = out.predicted < 1e-12;
  if (!out.second_order) out.relative_deviation = std::abs(out.fitted - out.predicted) / out.predicted;
  return out;
}

struct GapPrediction {
  int n = 0;
  double gamma = 1.0;
  double predicted = 0.0;  ///< (2 / sqrt(L)) gamma^2 |nu_n|
  double measured = 0.0;   ///< |G_n| of the scaled potential
  double relative_deviation = 0.0;
  std::optional<Interval> gap;
};

/**
 * Predicted and measured width of G_n for the scaled geometry, whose
 * potential is gamma^2 V. The interval is in units of the 1D operator; for
 * the tube spectrum add lambda_0 / epsilon^2.
 */
inline GapPrediction locate_gap_by_fourier(const WaveguideGeometry& g, double c_s, int n,
                                           double gamma, std::size_t m = 256,
                                           int half_width = 64) {
  if (n < 1) throw ValidationError("locate_gap_by_fourier: gap index must be >= 1");
  if (!(gamma > 0.0 && gamma <= 1.0)) {
    throw ValidationError("locate_gap_by_fourier: gamma must lie in (0, 1]");
  }
  const auto v = effective_potential(g, c_s, m);
  const double nu = std::abs(v.coefficient(n));
  if (nu < 1e-10) {
    throw ValidationError("locate_gap_by_fourier: nu_" + std::to_string(n) +
                          " vanishes; the gap is not first order");
  }
  const auto vg = effective_potential(scale_geometry(g, gamma), c_s, m);
  const auto r = compute_gaps(vg, n, half_width);
  GapPrediction out;
  out.n = n;
  out.gamma = gamma;
  out.predicted = 2.0 / std::sqrt(v.period()) * gamma * gamma * nu;
  out.measured = r.widths[static_cast<std::size_t>(n - 1)];
  out.relative_deviation = std::abs(out.measured - out.predicted) / out.predicted;
  out.gap = r.gaps[static_cast<std::size_t>(n - 1)];
  return out;
}

}  // namespace wgb
