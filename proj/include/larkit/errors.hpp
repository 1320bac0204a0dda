#pragma once

#include <stdexcept>
#include <string>

namespace larkit {

/// Invalid parameters or configuration. CLI exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Caller violated an operation precondition (bad index, empty input).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Numerical failure (non-convergence, singular solve). CLI exit code 3.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class RiccatiDivergence : public NumericError {
 public:
  RiccatiDivergence(double residual, long iterations)
      : NumericError("Riccati iteration did not converge after " + std::to_string(iterations) +
                     " iterations (last residual " + std::to_string(residual) + ")"),
        residual_(residual),
        iterations_(iterations) {}

  double residual() const noexcept { return residual_; }
  long iterations() const noexcept { return iterations_; }

 private:
  double residual_;
  long iterations_;
};

}  // namespace larkit
