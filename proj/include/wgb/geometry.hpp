/**
 * @file geometry.hpp
 * @brief Periodic tube geometry: curvature k, torsion tau, twist angle alpha.
 *
 * A tube of thickness epsilon is swept by a cross-section rotated by
 * alpha(s) relative to the Frenet frame of an arc-length parametrized,
 * L-periodic reference curve. Everything downstream depends on the curve
 * only through k(s) and the twist rate (tau + alpha')(s).
 */
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <numbers>
#include <span>
#include <sstream>
#include <variant>
#include <vector>

#include "wgb/errors.hpp"

namespace wgb {

/// One complex Fourier mode of a real profile: f(s) = sum_m coeff_m exp(2 pi i m s / L).
struct FourierMode {
  int m = 0;
  std::complex<double> coeff;
};

/**
 * An L-periodic real function, stored either as uniform samples on [0, L)
 * or as a finite set of Fourier modes.
 *
 * Sampled profiles are evaluated with the periodic cubic Hermite
 * interpolant whose nodal slopes are centered differences, so f'(s_j) is
 * the O(h^2) centered difference at the nodes. Mode profiles are evaluated
 * exactly, derivative included.
 */
class PeriodicProfile {
 public:
  static PeriodicProfile from_samples(double period, std::vector<double> samples) {
    check_period(period);
    if (samples.size() < 8) {
      throw ValidationError("PeriodicProfile: at least 8 samples required, got " +
                            std::to_string(samples.size()));
    }
    for (double v : samples) {
      if (!std::isfinite(v)) throw ValidationError("PeriodicProfile: non-finite sample");
    }
    PeriodicProfile p;
    p.period_ = period;
    p.samples_ = std::move(samples);
    return p;
  }

  /**
   * Modes with m > 0 may be given alone; their conjugate partner -m is added.
   * If both m and -m are given they must be conjugate (1e-12), and mode 0
   * must be real. Duplicate m values are rejected.
   */
  static PeriodicProfile from_modes(double period, const std::vector<FourierMode>& modes) {
    check_period(period);
    std::map<int, std::complex<double>> table;
    for (const auto& md : modes) {
      if (!std::isfinite(md.coeff.real()) || !std::isfinite(md.coeff.imag())) {
        throw ValidationError("PeriodicProfile: non-finite mode coefficient");
      }
      if (!table.emplace(md.m, md.coeff).second) {
        throw ValidationError("PeriodicProfile: duplicate mode m = " + std::to_string(md.m));
      }
    }
    if (auto it = table.find(0); it != table.end() && std::abs(it->second.imag()) > 1e-12) {
      throw ValidationError("PeriodicProfile: mode 0 must be real");
    }
    std::map<int, std::complex<double>> full = table;
    for (const auto& [m, c] : table) {
      if (m == 0) continue;
      auto partner = table.find(-m);
      if (partner == table.end()) {
        full[-m] = std::conj(c);
      } else if (std::abs(partner->second - std::conj(c)) > 1e-12) {
        throw ValidationError("PeriodicProfile: modes " + std::to_string(m) + " and " +
                              std::to_string(-m) + " are not complex conjugates");
      }
    }
    PeriodicProfile p;
    p.period_ = period;
    for (const auto& [m, c] : full) p.modes_.push_back({m, m == 0 ? std::complex<double>(c.real(), 0.0) : c});
    if (p.modes_.empty()) p.modes_.push_back({0, 0.0});
    p.is_modes_ = true;
    return p;
  }

  static PeriodicProfile constant(double period, double value) {
    return from_modes(period, {{0, value}});
  }

  double period() const noexcept { return period_; }
  bool is_modes() const noexcept { return is_modes_; }
  const std::vector<double>& samples() const noexcept { return samples_; }
  const std::vector<FourierMode>& modes() const noexcept { return modes_; }

  double value(double s) const {
    if (is_modes_) {
      std::complex<double> acc = 0.0;
      for (const auto& md : modes_) acc += md.coeff * phase(md.m, s);
      return acc.real();
    }
    const auto [i0, t] = locate(s);
    const double h = spacing();
    const double f0 = sample_at(i0), f1 = sample_at(i0 + 1);
    const double d0 = node_slope(i0), d1 = node_slope(i0 + 1);
    const double t2 = t * t, t3 = t2 * t;
    return (2 * t3 - 3 * t2 + 1) * f0 + (t3 - 2 * t2 + t) * h * d0 + (-2 * t3 + 3 * t2) * f1 +
           (t3 - t2) * h * d1;
  }

  double operator()(double s) const { return value(s); }

  double derivative(double s) const {
    if (is_modes_) {
      std::complex<double> acc = 0.0;
      const double w = 2.0 * std::numbers::pi / period_;
      for (const auto& md : modes_) acc += std::complex<double>(0.0, w * md.m) * md.coeff * phase(md.m, s);
      return acc.real();
    }
    const auto [i0, t] = locate(s);
    const double h = spacing();
    const double f0 = sample_at(i0), f1 = sample_at(i0 + 1);
    const double d0 = node_slope(i0), d1 = node_slope(i0 + 1);
    const double t2 = t * t;
    return ((6 * t2 - 6 * t) * f0 + (3 * t2 - 4 * t + 1) * h * d0 + (-6 * t2 + 6 * t) * f1 +
            (3 * t2 - 2 * t) * h * d1) / h;
  }

  /// Values on the uniform grid s_j = j L / count.
  std::vector<double> sample(std::size_t count) const {
    std::vector<double> out(count);
    if (!is_modes_ && count == samples_.size()) return samples_;
    for (std::size_t j = 0; j < count; ++j) out[j] = value(grid_point(j, count));
    return out;
  }

  std::vector<double> sample_derivative(std::size_t count) const {
    std::vector<double> out(count);
    if (!is_modes_ && count == samples_.size()) {
      for (std::size_t j = 0; j < count; ++j) out[j] = node_slope(static_cast<long>(j));
      return out;
    }
    for (std::size_t j = 0; j < count; ++j) out[j] = derivative(grid_point(j, count));
    return out;
  }

  /// max |f| over the stored samples, or over a 1024-point grid for modes.
  double max_abs() const {
    const auto vals = is_modes_ ? sample(1024) : samples_;
    double m = 0.0;
    for (double v : vals) m = std::max(m, std::abs(v));
    return m;
  }

  PeriodicProfile scaled(double factor) const {
    PeriodicProfile p = *this;
    for (auto& v : p.samples_) v *= factor;
    for (auto& md : p.modes_) md.coeff *= factor;
    return p;
  }

  /// Sample count used by the profile's own representation (0 for modes).
  std::size_t native_count() const noexcept { return is_modes_ ? 0 : samples_.size(); }

  double grid_point(std::size_t j, std::size_t count) const {
    return period_ * static_cast<double>(j) / static_cast<double>(count);
  }

 private:
  PeriodicProfile() = default;

  static void check_period(double period) {
    if (!(period > 0.0) || !std::isfinite(period)) {
      throw ValidationError("PeriodicProfile: period must be positive and finite");
    }
  }

  std::complex<double> phase(int m, double s) const {
    const double arg = 2.0 * std::numbers::pi * m * wrap(s) / period_;
    return {std::cos(arg), std::sin(arg)};
  }

  double wrap(double s) const {
    double r = std::fmod(s, period_);
    if (r < 0.0) r += period_;
    return r;
  }

  double spacing() const { return period_ / static_cast<double>(samples_.size()); }

  std::pair<long, double> locate(double s) const {
    const double x = wrap(s) / spacing();
    long i0 = static_cast<long>(std::floor(x));
    double t = x - static_cast<double>(i0);
    const long n = static_cast<long>(samples_.size());
    if (i0 >= n) { i0 -= n; }
    return {i0, t};
  }

  double sample_at(long i) const {
    const long n = static_cast<long>(samples_.size());
    return samples_[static_cast<std::size_t>(((i % n) + n) % n)];
  }

  double node_slope(long i) const {
    return (sample_at(i + 1) - sample_at(i - 1)) / (2.0 * spacing());
  }

  double period_ = 1.0;
  bool is_modes_ = false;
  std::vector<double> samples_;
  std::vector<FourierMode> modes_;
};

/**
 * Validated tube description. Invariants, checked by build_geometry:
 * common period for k, tau, alpha; alpha(0) = 0; epsilon > 0; gamma > 0;
 * c > max k^2 / 4.
 */
struct WaveguideGeometry {
  PeriodicProfile k;      ///< curvature [1/length]
  PeriodicProfile tau;    ///< torsion [1/length]
  PeriodicProfile alpha;  ///< twist angle [rad]
  double epsilon = 0.1;   ///< thickness scale
  double c = 1.0;         ///< spectral shift; must exceed max k^2 / 4
  double gamma = 1.0;     ///< cumulative geometric scale applied so far

  double period() const { return k.period(); }
};

struct GeometrySpec {
  PeriodicProfile k;
  PeriodicProfile tau;
  PeriodicProfile alpha;
  double epsilon = 0.1;
  double c = 1.0;
  double gamma = 1.0;
};

namespace detail {

inline double max_k_squared_quarter(const PeriodicProfile& k) {
  const double m = k.max_abs();
  return m * m / 4.0;
}

inline void check_geometry(const WaveguideGeometry& g) {
  const double L = g.k.period();
  if (std::abs(g.tau.period() - L) > 1e-12 * L || std::abs(g.alpha.period() - L) > 1e-12 * L) {
    throw ValidationError("geometry: profiles k, tau, alpha must share the same period");
  }
  if (!(g.epsilon > 0.0)) throw ValidationError("geometry: epsilon must be > 0");
  if (!(g.gamma > 0.0)) throw ValidationError("geometry: gamma must be > 0");
  const double bound = max_k_squared_quarter(g.k);
  if (!(g.c > bound)) {
    std::ostringstream os;
    os << "geometry: c = " << g.c << " must exceed max k^2/4 = " << bound;
    throw ValidationError(os.str());
  }
  const double a0 = g.alpha.value(0.0);
  if (std::abs(a0) > 1e-10 * std::max(1.0, g.alpha.max_abs())) {
    throw ValidationError("geometry: alpha(0) must be 0");
  }
}

}  // namespace detail

/**
 * Geometry with k_g = g k, (tau + alpha')_g = g (tau + alpha'), c_g = g^2 c.
 * Torsion and twist angle are both multiplied by g, which keeps alpha(0) = 0.
 */
inline WaveguideGeometry scale_geometry(const WaveguideGeometry& g, double factor) {
  if (!(factor > 0.0) || !std::isfinite(factor)) {
    throw ValidationError("scale_geometry: gamma must be > 0");
  }
  WaveguideGeometry out = g;
  out.k = g.k.scaled(factor);
  out.tau = g.tau.scaled(factor);
  out.alpha = g.alpha.scaled(factor);
  out.c = g.c * factor * factor;
  out.gamma = g.gamma * factor;
  return out;
}

/// Validates the spec and applies its gamma (if not 1) through scale_geometry.
inline WaveguideGeometry build_geometry(const GeometrySpec& spec) {
  WaveguideGeometry g{spec.k, spec.tau, spec.alpha, spec.epsilon, spec.c, 1.0};
  if (!(spec.gamma > 0.0)) throw ValidationError("geometry: gamma must be > 0");
  detail::check_geometry(g);
  if (spec.gamma != 1.0) g = scale_geometry(g, spec.gamma);
  return g;
}

/**
 * Twist rate (tau + alpha')(s). Exact mode sum when both profiles are mode
 * based; otherwise samples on the finer of the two native grids (at least 64
 * points), equal to tau(s_j) + alpha'(s_j) node by node.
 */
inline PeriodicProfile twist_rate(const WaveguideGeometry& g) {
  const double L = g.period();
  if (g.tau.is_modes() && g.alpha.is_modes()) {
    std::map<int, std::complex<double>> acc;
    for (const auto& md : g.tau.modes()) acc[md.m] += md.coeff;
    const double w = 2.0 * std::numbers::pi / L;
    for (const auto& md : g.alpha.modes()) acc[md.m] += std::complex<double>(0.0, w * md.m) * md.coeff;
    std::vector<FourierMode> modes;
    for (const auto& [m, c] : acc) {
      if (m >= 0) modes.push_back({m, c});
    }
    return PeriodicProfile::from_modes(L, modes);
  }
  const std::size_t count =
      std::max<std::size_t>({64, g.tau.native_count(), g.alpha.native_count()});
  auto t = g.tau.sample(count);
  const auto da = g.alpha.sample_derivative(count);
  for (std::size_t j = 0; j < count; ++j) t[j] += da[j];
  return PeriodicProfile::from_samples(L, std::move(t));
}

/// Returns true iff epsilon * max|k| * radius < 1 - margin, which keeps beta > margin on the tube.
inline bool validate_thickness(const WaveguideGeometry& g, double section_radius,
                               double margin = 0.05) {
  return g.epsilon * g.k.max_abs() * section_radius < 1.0 - margin;
}

struct FrenetProfiles {
  PeriodicProfile curvature;
  PeriodicProfile torsion;
};

/**
 * Curvature and torsion of an arc-length parametrized periodic curve.
 *
 * `points` holds r(s_j) for s_j = j L / M, j = 0..M (M + 1 points; the last
 * one is r(0) + u where u is the period vector). Derivatives use fourth-order
 * centered stencils on the periodic extension r(s + L) = r(s) + u:
 *   k = |r''|,  tau = (r' x r'') . r''' / k^2.
 * Rejects non-unit-speed input (| |r'| - 1 | > 1e-6) and points with k < 1e-8.
 */
inline FrenetProfiles frenet_from_curve(std::span<const Eigen::Vector3d> points, double period) {
  if (points.size() < 9) throw ValidationError("frenet_from_curve: need at least 9 points");
  if (!(period > 0.0)) throw ValidationError("frenet_from_curve: period must be > 0");
  const long m = static_cast<long>(points.size()) - 1;
  const Eigen::Vector3d shift = points.back() - points.front();
  const double h = period / static_cast<double>(m);
  auto r = [&](long j) -> Eigen::Vector3d {
    const long q = (j >= 0) ? j / m : -((-j + m - 1) / m);
    const long i = j - q * m;
    return points[static_cast<std::size_t>(i)] + static_cast<double>(q) * shift;
  };
  std::vector<double> kappa(static_cast<std::size_t>(m)), torsion(static_cast<std::size_t>(m));
  for (long j = 0; j < m; ++j) {
    const Eigen::Vector3d d1 = (-r(j + 2) + 8.0 * r(j + 1) - 8.0 * r(j - 1) + r(j - 2)) / (12.0 * h);
    const Eigen::Vector3d d2 =
        (-r(j + 2) + 16.0 * r(j + 1) - 30.0 * r(j) + 16.0 * r(j - 1) - r(j - 2)) / (12.0 * h * h);
    const Eigen::Vector3d d3 = (-r(j + 3) + 8.0 * r(j + 2) - 13.0 * r(j + 1) + 13.0 * r(j - 1) -
                                8.0 * r(j - 2) + r(j - 3)) / (8.0 * h * h * h);
    const double speed = d1.norm();
    if (std::abs(speed - 1.0) > 1e-6) {
      std::ostringstream os;
      os << "frenet_from_curve: not arc-length parametrized (|r'| = " << speed << " at s = "
         << static_cast<double>(j) * h << ")";
      throw ValidationError(os.str());
    }
    const double k = d2.norm();
    if (k < 1e-8) {
      throw ValidationError("frenet_from_curve: curvature vanishes at s = " +
                            std::to_string(static_cast<double>(j) * h) +
                            "; supply k and tau directly for curves with straight pieces");
    }
    kappa[static_cast<std::size_t>(j)] = k;
    torsion[static_cast<std::size_t>(j)] = d1.cross(d2).dot(d3) / (k * k);
  }
  return {PeriodicProfile::from_samples(period, std::move(kappa)),
          PeriodicProfile::from_samples(period, std::move(torsion))};
}

}  // namespace wgb
