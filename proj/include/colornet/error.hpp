#pragma once

#include <stdexcept>
#include <string>

namespace colornet {

/// Caller passed something the operation does not accept (bad enum, shape
/// mismatch, oversized request). Maps to CLI exit code 2.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A value lies outside the mathematical domain of a conversion.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Malformed, truncated or unreadable input data. Maps to CLI exit code 3.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training diverged (non-finite loss). Maps to CLI exit code 4.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, int epoch)
      : std::runtime_error(what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

}  // namespace colornet
