#pragma once

#include <stdexcept>
#include <string>

namespace safempc {

/// Invalid or inconsistent configuration: dimension mismatches, bad
/// hyperparameters, schema violations, failed safe-set validation.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// A call-site argument outside the operation's domain (e.g. c <= 0 in a
/// Minkowski bound, a feedback law centered away from its ellipsoid).
class ArgumentError : public std::invalid_argument {
 public:
  explicit ArgumentError(const std::string& what)
      : std::invalid_argument(what) {}
};

/// Numerical breakdown that cannot be repaired locally.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what)
      : std::runtime_error(what) {}
};

/// The simulated plant produced a non-finite state.
class SimulationError : public std::runtime_error {
 public:
  explicit SimulationError(const std::string& what)
      : std::runtime_error(what) {}
};

}  // namespace safempc
