#pragma once

#include <stdexcept>
#include <string>

namespace geoflow {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A point or vector lies outside the region where an operation is defined.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A configuration or model description is malformed.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// An operation's documented precondition does not hold.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// An iterative solver stopped without meeting its tolerance.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double last_residual)
      : Error(what), last_residual_(last_residual) {}
  double last_residual() const noexcept { return last_residual_; }

 private:
  double last_residual_;
};

/// The ODE integrator could not make progress (step size underflow).
class IntegrationError : public Error {
 public:
  using Error::Error;
};

/// A Jacobi solution vanished where the metric family forbids it.
class ConjugatePointError : public Error {
 public:
  using Error::Error;
};

/// Diagnostics limits were exceeded (e.g. runaway chart switching).
class DiagnosticsError : public Error {
 public:
  using Error::Error;
};

/// Two traced curves did not meet within the searched range.
class NoIntersectionError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace geoflow
