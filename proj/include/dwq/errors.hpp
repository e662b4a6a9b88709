#pragma once

#include <stdexcept>
#include <string>

namespace dwq {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operands were built over Fock spaces of different truncation.
class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

/// A value violates the documented precondition of an operation.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Projection onto a parity sector with (numerically) zero weight.
class NoSupport : public Error {
 public:
  using Error::Error;
};

/// The stochastic integrator produced a non-finite or non-positive state.
class IntegratorAbort : public Error {
 public:
  IntegratorAbort(const std::string& what, long step = -1)
      : Error(step >= 0 ? what + " (step " + std::to_string(step) + ")" : what),
        step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

/// Misuse of a stateful object, e.g. stepping a finished episode.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

/// Malformed configuration file or configuration value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace dwq
