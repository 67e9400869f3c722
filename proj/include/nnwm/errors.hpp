#pragma once

#include <stdexcept>
#include <string>

namespace nnwm {

// Error taxonomy; the CLI maps these onto exit codes:
//   ConfigError / UsageError -> 2, DataError -> 3, NumericError -> 4.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration, shape mismatch, bad preset, key/layer mismatch.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// API misuse (e.g. backward against stale activations).
class UsageError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// Broken or missing input data (dataset files, checkpoints).
class DataError : public Error {
 public:
  using Error::Error;
};

// Non-finite values produced or consumed by the engine.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace nnwm
