#pragma once

#include <stdexcept>
#include <string>

namespace flexreg {

/// Argument outside the mathematical domain of a function (negative magnitude,
/// derivative requested at zero, exponent out of range).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Vector/operator sizes disagree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The weighted normal system could not be factored, or the factored solve
/// missed its residual contract.
class SingularSystemError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An iterative routine ran out of iterations before meeting its tolerance.
class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed run configuration or descriptor.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

inline void require_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": size mismatch (" + std::to_string(a) +
                         " vs " + std::to_string(b) + ")");
  }
}

}  // namespace detail
}  // namespace flexreg
