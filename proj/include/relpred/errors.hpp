#pragma once

#include <stdexcept>
#include <string>

namespace relpred {

// Base for everything the library throws. The CLI maps subclasses to exit
// codes: ConfigError -> 1, DataError/MetricError -> 2,
// CheckpointError/TrainingError -> 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration or usage (bad hyperparameters, bad flags).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input data (parse failures, vocabulary misses,
// missing names, degenerate splits).
class DataError : public Error {
 public:
  using Error::Error;
};

// Metric computed over an empty or inconsistent query set.
class MetricError : public Error {
 public:
  using Error::Error;
};

// Corrupt, truncated or incompatible checkpoint file.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

// Training diverged (non-finite loss) or otherwise failed at runtime.
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace relpred
