#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sudfer {

enum class ErrorCode {
  DimensionMismatch,
  NotSymmetric,
  NotPSD,
  NonFinite,
  FactorizationFailure,
  MeanMismatch,
  EmptyInput,
  InvalidParameter,
  DomainError,
  IndexOutOfRange,
  NotCentered,
  InvalidIncrements,
  DegenerateGamma,
  DegenerateN,
  WrongDimension,
  UnknownGenerator,
  ConfigError,
  IoError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NotSymmetric: return "NotSymmetric";
    case ErrorCode::NotPSD: return "NotPSD";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::FactorizationFailure: return "FactorizationFailure";
    case ErrorCode::MeanMismatch: return "MeanMismatch";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::InvalidParameter: return "InvalidParameter";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::NotCentered: return "NotCentered";
    case ErrorCode::InvalidIncrements: return "InvalidIncrements";
    case ErrorCode::DegenerateGamma: return "DegenerateGamma";
    case ErrorCode::DegenerateN: return "DegenerateN";
    case ErrorCode::WrongDimension: return "WrongDimension";
    case ErrorCode::UnknownGenerator: return "UnknownGenerator";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure in the toolkit is reported through this exception; `code()`
/// lets callers branch without parsing the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace sudfer
