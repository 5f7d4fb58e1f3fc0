#pragma once

#include <stdexcept>
#include <string>

namespace msnet {

// Exit codes shared by the CLI and tests.
namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int usage = 1;
inline constexpr int data = 2;
inline constexpr int numerical = 3;
}  // namespace exit_code

/// Malformed files, mismatched shapes, bad configuration values.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

struct ConfigError : DataError {
  explicit ConfigError(const std::string& what) : DataError(what) {}
};

/// Divergence, non-finite forces or losses.
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace msnet
