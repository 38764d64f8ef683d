#pragma once

#include <stdexcept>
#include <string>

namespace rlasso {

/// Base class for all library errors. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or argument values (exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input data with inconsistent or unusable shape, or malformed files (exit code 3).
class DataError : public Error {
 public:
  using Error::Error;
};

/// A numerical procedure failed to produce a valid result (exit code 4).
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace rlasso
