#pragma once

#include <stdexcept>
#include <string>

namespace seqcluster {

// Exception hierarchy. The CLI maps each family onto a process exit code:
// ConfigError -> 2, NumericError -> 3, IoError -> 4.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes handed to a primitive.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration, bad user input, or a contract violation by the caller.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A computation produced NaN/Inf or otherwise diverged.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Operation invoked in the wrong state (e.g. backward before forward).
class StateError : public Error {
 public:
  using Error::Error;
};

/// File system / parsing failures.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace seqcluster
