#pragma once

#include <stdexcept>
#include <string>

namespace critlab {

/// Bad input: malformed domain, unknown vertex, invalid config. CLI exit code 2.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An exhaustion limit could not be decided within the ambient truncation. Exit code 3.
class InconclusiveError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical routine failed (singular system, no convergence). Exit code 4.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The operator violates the standing assumption lambda0 >= 0.
class NegativeLambda0 : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Bisection bracket does not straddle the critical coupling.
class NoSignChange : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// An experiment's classification precondition does not hold.
class PreconditionError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

}  // namespace critlab
