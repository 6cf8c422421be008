#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace payshield {

enum class ErrorKind {
  kMissingColumn,
  kParseError,
  kNonBinaryLabel,
  kEmptyDataset,
  kDegenerateClass,
  kEmptyInput,
  kUnknownFeature,
  kEmptyClassSubset,
  kKTooLarge,
  kDimensionMismatch,
  kLengthMismatch,
  kSingleClass,
  kFormatError,
  kSchemaMismatch,
  kInvalidArgument,
  kConfigError,
  kIoError,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kMissingColumn: return "MissingColumn";
    case ErrorKind::kParseError: return "ParseError";
    case ErrorKind::kNonBinaryLabel: return "NonBinaryLabel";
    case ErrorKind::kEmptyDataset: return "EmptyDataset";
    case ErrorKind::kDegenerateClass: return "DegenerateClass";
    case ErrorKind::kEmptyInput: return "EmptyInput";
    case ErrorKind::kUnknownFeature: return "UnknownFeature";
    case ErrorKind::kEmptyClassSubset: return "EmptyClassSubset";
    case ErrorKind::kKTooLarge: return "KTooLarge";
    case ErrorKind::kDimensionMismatch: return "DimensionMismatch";
    case ErrorKind::kLengthMismatch: return "LengthMismatch";
    case ErrorKind::kSingleClass: return "SingleClass";
    case ErrorKind::kFormatError: return "FormatError";
    case ErrorKind::kSchemaMismatch: return "SchemaMismatch";
    case ErrorKind::kInvalidArgument: return "InvalidArgument";
    case ErrorKind::kConfigError: return "ConfigError";
    case ErrorKind::kIoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure in the library is reported as an Error carrying a kind that
/// callers can branch on; the message holds the human-readable context.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind),
        detail_(message) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

}  // namespace payshield
