#pragma once

#include <stdexcept>
#include <string>

namespace redpg {

// Bad caller input: dimension mismatches, invalid config values, malformed files.
struct InputError : std::invalid_argument {
  explicit InputError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Computation produced non-finite values or lost required matrix structure.
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

// An iterative solver failed to reach its required residual or stability property.
struct SolverError : std::runtime_error {
  explicit SolverError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace redpg
