#pragma once

#include <stdexcept>
#include <string>

namespace vgamba {

// Shape/contract violations on tensor operations.
struct ShapeError : std::invalid_argument {
  explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Bad run configuration (unknown key, inconsistent model spec, bad flag combo).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values where finite ones are required.
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

// Refusing a computation that would exceed a hard resource guard.
struct ResourceError : std::runtime_error {
  explicit ResourceError(const std::string& msg) : std::runtime_error(msg) {}
};

// Training loop diverged (NaN/inf loss); message names the first offending module.
struct DivergenceError : std::runtime_error {
  explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace vgamba
