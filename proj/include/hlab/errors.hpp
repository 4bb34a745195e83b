#pragma once

#include <stdexcept>
#include <string>

namespace hlab {

/// Base class for everything thrown by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Caller passed values that violate a documented precondition.
struct ArgumentError : Error {
  using Error::Error;
};

/// A user-supplied field returned a non-finite value at a probed point.
struct EvaluationError : Error {
  using Error::Error;
};

/// A matrix that must be invertible was (numerically) singular.
struct SingularityError : Error {
  using Error::Error;
};

/// An iteration failed to reach its tolerance within the allowed budget.
struct ConvergenceError : Error {
  using Error::Error;
};

/// Input data failed a structural requirement before any computation ran.
struct PreconditionError : Error {
  using Error::Error;
};

/// A map builder could not certify the properties it promises.
struct TransformError : Error {
  using Error::Error;
};

/// Newton inversion of a transform map did not converge.
struct InversionError : ConvergenceError {
  using ConvergenceError::ConvergenceError;
};

/// Too many sample paths blew up or otherwise failed.
struct SimulationError : Error {
  using Error::Error;
};

/// A functional was requested on samples outside its admissible range.
struct IntegrandError : Error {
  using Error::Error;
};

/// Independently measured quantities disagree beyond the allowed slack.
struct ConsistencyError : Error {
  using Error::Error;
};

/// A ratio or bound is indistinguishable from a degenerate limit.
struct DegenerateError : Error {
  using Error::Error;
};

/// A point lies outside the domain where an operation is defined.
struct DomainError : Error {
  using Error::Error;
};

/// Scenario configuration is syntactically or semantically unusable.
struct ConfigurationError : Error {
  ConfigurationError(const std::string& msg, int line = 0, int column = 0)
      : Error(msg), line(line), column(column) {}
  int line;
  int column;
};

/// File could not be read or written.
struct IoError : Error {
  using Error::Error;
};

}  // namespace hlab
