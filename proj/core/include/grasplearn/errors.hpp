#pragma once

#include <stdexcept>
#include <string>

namespace grasp {

// Misconfiguration: bad config files, shape mismatches, impossible setups.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// API misuse or missing state: backward before forward, absent checkpoints.
class StateError : public std::runtime_error {
 public:
  explicit StateError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical breakdown: non-finite gradients, failed pretraining separation.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Process exit codes used by the CLI and tests.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitState = 3,
  kExitNumeric = 4,
};

}  // namespace grasp
