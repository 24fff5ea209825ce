/**
 * @file errors.hpp
 * @brief Exception types shared by every module.
 *
 * Two failure classes exist: bad input (ValidationError) and numerical
 * failure (SolverError). The command-line driver maps them to exit codes
 * 2 and 3.
 */
#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace wgb {

/// Input rejected: violated precondition, schema error, degenerate shape.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Numerical failure. Carries the residual norms observed at the point of failure.
class SolverError : public std::runtime_error {
 public:
  explicit SolverError(const std::string& what, std::vector<double> residuals = {})
      : std::runtime_error(what), residuals_(std::move(residuals)) {}

  const std::vector<double>& residuals() const noexcept { return residuals_; }

 private:
  std::vector<double> residuals_;
};

}  // namespace wgb
