#pragma once

#include <stdexcept>
#include <string>

namespace vortex {

/// Bad arguments or violated preconditions. Maps to exit code 1.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Numerical failure (step-size underflow, quadrature that will not converge). Maps to exit code 2.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised by the time integrator when the step size underflows.
class IntegrationError : public NumericalError {
 public:
  IntegrationError(const std::string& what, double last_good_time)
      : NumericalError(what), last_good_time_(last_good_time) {}
  double last_good_time() const noexcept { return last_good_time_; }

 private:
  double last_good_time_;
};

/// Adaptive quadrature gave up; the partial value is kept.
class QuadratureError : public NumericalError {
 public:
  QuadratureError(const std::string& what, double partial, double error_estimate)
      : NumericalError(what), partial_(partial), error_estimate_(error_estimate) {}
  double partial() const noexcept { return partial_; }
  double error_estimate() const noexcept { return error_estimate_; }

 private:
  double partial_;
  double error_estimate_;
};

/// Filesystem trouble. Maps to exit code 3.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace vortex
