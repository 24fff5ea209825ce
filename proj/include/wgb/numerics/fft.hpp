/**
 * @file fft.hpp
 * @brief Power-of-two periodic FFT (Eigen's kissfft backend).
 *
 * Normalization: the forward transform is unnormalized,
 *   X_n = sum_j x_j exp(-2 pi i n j / M),
 * and the inverse carries the 1/M. The effective potential's coefficients
 * nu_n = (1/sqrt(L)) (L/M) X_n are formed in effective1d.
 */
#pragma once

#include <unsupported/Eigen/FFT>

#include <complex>
#include <span>
#include <vector>

#include "wgb/errors.hpp"

namespace wgb::numerics {

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline void require_power_of_two(std::size_t n, const char* who) {
  if (!is_power_of_two(n)) {
    throw ValidationError(std::string(who) + ": length " + std::to_string(n) +
                          " is not a power of two");
  }
}

inline std::vector<std::complex<double>> fft_periodic(std::span<const double> samples) {
  require_power_of_two(samples.size(), "fft_periodic");
  Eigen::FFT<double> fft;
  std::vector<double> in(samples.begin(), samples.end());
  std::vector<std::complex<double>> out;
  fft.fwd(out, in);
  return out;
}

inline std::vector<std::complex<double>> fft_periodic(std::span<const std::complex<double>> samples) {
  require_power_of_two(samples.size(), "fft_periodic");
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> in(samples.begin(), samples.end());
  std::vector<std::complex<double>> out;
  fft.fwd(out, in);
  return out;
}

/// Inverse of fft_periodic (includes the 1/M factor).
inline std::vector<std::complex<double>> ifft_periodic(std::span<const std::complex<double>> modes) {
  require_power_of_two(modes.size(), "ifft_periodic");
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> in(modes.begin(), modes.end());
  std::vector<std::complex<double>> out;
  fft.inv(out, in);
  return out;
}

}  // namespace wgb::numerics
