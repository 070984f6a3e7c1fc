#pragma once

#include <stdexcept>
#include <string>

namespace cdt {

/// Arithmetic outside an operation's domain (log of a non-positive value,
/// division by zero).
class NumericDomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Training or evaluation produced a non-finite quantity.
class NumericFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A soft node cannot be discretized because its weight vector is all zeros.
class DegenerateNodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed experiment spec, model file or dataset file.
class SpecError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cdt
