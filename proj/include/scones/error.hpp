#pragma once

#include <stdexcept>
#include <string>

namespace scones {

// Error categories map onto CLI exit codes (see tools/scones_cli.cpp).
enum class ErrorCategory { kInvalidArgument = 2, kDomain = 3, kNumerical = 4, kIo = 5 };

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& what) : Error(ErrorCategory::kInvalidArgument, what) {}
};

// Argument outside the domain of a conjugate or compatibility function.
class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what) : Error(ErrorCategory::kDomain, what) {}
};

// Non-convergence, divergence, non-finite iterates.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(ErrorCategory::kNumerical, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCategory::kIo, what) {}
};

}  // namespace scones
