#pragma once

#include <stdexcept>
#include <string>

namespace sc3 {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Precondition violated (singular matrix, non-PD covariance, bad range, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// CNER at or below intrinsic entropy: no finite LQR bound exists.
class StabilityError : public Error {
 public:
  using Error::Error;
};

// CNER within the near-singular guard band above the entropy.
class NearSingularError : public Error {
 public:
  using Error::Error;
};

// Iterative method exhausted its budget.
class IterationLimitError : public Error {
 public:
  IterationLimitError(const std::string& what, double last_residual)
      : Error(what), last_residual(last_residual) {}
  double last_residual;
};

// No feasible configuration (empty effective set, unreachable stability, ...).
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

// Configuration file failed to parse or validate.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace sc3
