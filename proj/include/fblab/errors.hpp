#pragma once

#include <stdexcept>
#include <string>

namespace fblab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A point, ball or ellipsoid leaves the grid's domain box.
class OutOfDomainError : public Error {
 public:
  using Error::Error;
};

/// A matrix is not symmetric, not positive definite, or violates ellipticity bounds.
class InvalidMatrixError : public Error {
 public:
  using Error::Error;
};

/// An iterative solver stopped before reaching its tolerance.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double final_residual)
      : Error(what + " (final relative residual " + std::to_string(final_residual) + ")"),
        final_residual_(final_residual) {}
  double final_residual() const noexcept { return final_residual_; }

 private:
  double final_residual_;
};

/// A one-phase evaluation received a field with negative values.
class PhaseViolationError : public Error {
 public:
  using Error::Error;
};

/// A competitor does not share the boundary trace of the field it is compared to.
class InvalidCompetitorError : public Error {
 public:
  using Error::Error;
};

/// The perturbation constraint |lambda * phi| < 1 fails somewhere.
class ConstraintViolationError : public Error {
 public:
  using Error::Error;
};

/// An operation was called with arguments outside its documented preconditions.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Minimization diverged or produced non-finite values.
class SolverFailureError : public Error {
 public:
  using Error::Error;
};

/// A checkpoint file is malformed.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A scenario configuration could not be parsed or validated.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace fblab
