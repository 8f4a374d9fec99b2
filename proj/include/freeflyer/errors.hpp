#pragma once

#include <stdexcept>
#include <string>

namespace ff {

/// Euler extraction requested within 1e-6 of the pitch singularity.
struct GimbalLockError : std::domain_error {
  explicit GimbalLockError(double pitch)
      : std::domain_error("gimbal lock: |pitch| within 1e-6 of pi/2 (pitch=" +
                          std::to_string(pitch) + ")") {}
};

/// Integrator produced a non-finite state component; the episode must abort.
struct NonFiniteStateError : std::runtime_error {
  NonFiniteStateError() : std::runtime_error("non-finite state after dynamics step") {}
};

struct ShapeMismatchError : std::invalid_argument {
  explicit ShapeMismatchError(const std::string& what) : std::invalid_argument(what) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

struct IncompleteTraceError : std::invalid_argument {
  explicit IncompleteTraceError(const std::string& what) : std::invalid_argument(what) {}
};

}  // namespace ff
