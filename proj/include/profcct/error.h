#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace profcct {

enum class ErrorKind {
  kDuplicateMetric,
  kArity,
  kFormat,
  kUnknownFormat,
  kParse,
  kUnknownMetric,
  kUnknownMetricSemantics,
  kMerge,
  kRange,
  kEmptyQuery,
  kMetricMismatch,
  kUnknownPath,
  kUnknownRole,
  kFormula,
  kCallback,
  kInvalidFrame,
  kIo,
};

std::string_view error_kind_name(ErrorKind kind);

// All library failures are reported through this type. `location` carries the
// byte offset (format errors), 1-based line (parse errors) or 0-based column
// (formula errors) when one applies.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message,
        std::optional<std::size_t> location = std::nullopt)
      : std::runtime_error(message), kind_(kind), location_(location) {}

  ErrorKind kind() const { return kind_; }
  std::optional<std::size_t> location() const { return location_; }

 private:
  ErrorKind kind_;
  std::optional<std::size_t> location_;
};

}  // namespace profcct
