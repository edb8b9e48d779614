#include "condex/error.hpp"

namespace condex {

Error::Error(ErrorCategory category, std::string kind, const std::string& message)
    : std::runtime_error(message), category_(category), kind_(std::move(kind)) {}

NotPositiveDefinite::NotPositiveDefinite(std::int64_t pivot)
    : NumericalError("not_positive_definite",
                     "matrix is not positive definite: non-positive pivot at column " +
                         std::to_string(pivot)),
      pivot_(pivot) {}

const char* to_string(ErrorCategory category) noexcept {
  switch (category) {
    case ErrorCategory::config:
      return "config";
    case ErrorCategory::data:
      return "data";
    case ErrorCategory::numerical:
      return "numerical";
  }
  return "unknown";
}

}  // namespace condex
