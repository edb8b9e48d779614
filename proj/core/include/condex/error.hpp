#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace condex {

/// Broad failure class. The CLI maps these onto exit codes 2, 3 and 4.
enum class ErrorCategory { config, data, numerical };

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, std::string kind, const std::string& message);

  ErrorCategory category() const noexcept { return category_; }
  /// Short machine-readable identifier, e.g. "too_few_exceedances".
  const std::string& kind() const noexcept { return kind_; }

 private:
  ErrorCategory category_;
  std::string kind_;
};

class ConfigError : public Error {
 public:
  ConfigError(std::string kind, const std::string& message)
      : Error(ErrorCategory::config, std::move(kind), message) {}
};

class DataError : public Error {
 public:
  DataError(std::string kind, const std::string& message)
      : Error(ErrorCategory::data, std::move(kind), message) {}
};

class NumericalError : public Error {
 public:
  NumericalError(std::string kind, const std::string& message)
      : Error(ErrorCategory::numerical, std::move(kind), message) {}
};

/// Raised by the sparse Cholesky when a pivot is not strictly positive.
class NotPositiveDefinite : public NumericalError {
 public:
  explicit NotPositiveDefinite(std::int64_t pivot);
  /// Column of the permuted matrix at which the factorization broke down.
  std::int64_t pivot() const noexcept { return pivot_; }

 private:
  std::int64_t pivot_;
};

const char* to_string(ErrorCategory category) noexcept;

}  // namespace condex
