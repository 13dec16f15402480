#pragma once

#include <stdexcept>
#include <string>

namespace eatta {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration, arguments, or shapes supplied by the caller.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values, divergence, or a refused numeric update.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed files or failed reads/writes.
class IoError : public Error {
 public:
  using Error::Error;
};

/// The label source could not deliver a label.
class OracleError : public Error {
 public:
  using Error::Error;
};

}  // namespace eatta
