#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lcoal {

enum class ErrorCode {
  NonProbability,
  NoKingmanAtom,
  BadSupport,
  QuadratureFailure,
  DomainError,
  ConvergenceFailure,
  UnsupportedMeasure,
  BadGrid,
  InsufficientN0,
  OracleMismatch,
  ConfigError,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::NonProbability: return "NonProbability";
    case ErrorCode::NoKingmanAtom: return "NoKingmanAtom";
    case ErrorCode::BadSupport: return "BadSupport";
    case ErrorCode::QuadratureFailure: return "QuadratureFailure";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::ConvergenceFailure: return "ConvergenceFailure";
    case ErrorCode::UnsupportedMeasure: return "UnsupportedMeasure";
    case ErrorCode::BadGrid: return "BadGrid";
    case ErrorCode::InsufficientN0: return "InsufficientN0";
    case ErrorCode::OracleMismatch: return "OracleMismatch";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

/// Single exception type for the library; `code()` tells callers what failed.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  /// Errors that stem from bad input rather than a failed computation.
  bool is_config_error() const noexcept {
    switch (code_) {
      case ErrorCode::NonProbability:
      case ErrorCode::NoKingmanAtom:
      case ErrorCode::BadSupport:
      case ErrorCode::DomainError:
      case ErrorCode::UnsupportedMeasure:
      case ErrorCode::BadGrid:
      case ErrorCode::InsufficientN0:
      case ErrorCode::ConfigError:
        return true;
      default:
        return false;
    }
  }

 private:
  ErrorCode code_;
};

}  // namespace lcoal
