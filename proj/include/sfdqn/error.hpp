#pragma once

#include <stdexcept>
#include <string>

namespace sfdqn {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes of parameters, features or tables do not chain.
class StructuralError : public Error {
 public:
  using Error::Error;
};

/// An argument is outside its documented domain (NaN input, negative radius, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Operation not permitted in the current state of an object (e.g. sampling an empty buffer).
class StateError : public Error {
 public:
  using Error::Error;
};

/// An iterative solver hit its iteration cap. Carries the last residual.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what + " (residual " + std::to_string(residual) + ")"), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

/// A finite-difference probe would straddle a ReLU kink. Retry with jittered parameters.
class KinkProximityError : public Error {
 public:
  KinkProximityError(const std::string& what, double min_abs_preactivation)
      : Error(what), min_abs_preactivation_(min_abs_preactivation) {}
  double min_abs_preactivation() const { return min_abs_preactivation_; }

 private:
  double min_abs_preactivation_;
};

}  // namespace sfdqn
