#pragma once

#include <stdexcept>
#include <string>

namespace cfaudit {

// Exit codes surfaced by the command-line driver.
enum class ExitCode : int { kSuccess = 0, kUsage = 1, kData = 2, kNumerical = 3 };

// Bad flags, unknown subcommands, invalid parameter values.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input files, schema mismatches, missing or stale artifacts.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Rank deficiency, non-finite results, unidentifiable effects.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cfaudit
