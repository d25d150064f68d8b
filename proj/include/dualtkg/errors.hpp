#pragma once

#include <stdexcept>
#include <string>

namespace dualtkg {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dimension / shape contract violations.
struct ShapeError : Error {
  using Error::Error;
};

// NaN/Inf, division by zero, diverged losses.
struct NumericError : Error {
  using Error::Error;
};

// Files, ids, malformed input.
struct DataError : Error {
  using Error::Error;
};

// Out-of-range hyperparameters or flags.
struct ConfigError : Error {
  using Error::Error;
};

// Process exit codes used by the CLI, one per failure category.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitData = 2,
  kExitShape = 3,
  kExitNumeric = 4,
  kExitConfig = 5,
};

}  // namespace dualtkg
