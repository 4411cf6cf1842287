#pragma once

#include <stdexcept>
#include <string>

namespace romance {

/// Invalid configuration: bad shapes, unknown modes, malformed config files.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// API misuse by the caller (e.g. backward on a non-scalar).
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A precondition of an environment or wrapper was violated
/// (e.g. stepping with an action the mask forbids).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Non-finite values reached an update.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace romance
