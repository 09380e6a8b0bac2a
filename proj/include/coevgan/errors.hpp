#pragma once

#include <stdexcept>
#include <string>

namespace coevgan {

/// Input outside the mathematical domain of an operation (non-finite values,
/// inverted intervals, violated parameter ordering).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Inconsistent configuration: length mismatches, out-of-range settings,
/// unknown config keys.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Operation called on an object in the wrong state (e.g. sorting a
/// population whose fitness has not been evaluated).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A rejection sampler gave up.
class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace coevgan
