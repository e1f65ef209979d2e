#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace snspd {

/// Coarse failure class, mapped one-to-one onto CLI exit codes.
enum class ErrorCategory { Config = 2, Numerical = 3, DataContract = 4 };

enum class ErrorKind {
  OutOfRange,
  InvalidArgument,
  NoGuidedMode,
  ConvergenceFailure,
  DegenerateDenominator,
  MissingAlignedPoint,
  NonConvergence,
  NegativeLoss,
  InsufficientPoints,
  BiasNotFound,
  NoSwitch,
  DegenerateFit,
  FitFailure,
  GranularityViolation,
  Config,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::OutOfRange: return "OutOfRange";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::NoGuidedMode: return "NoGuidedMode";
    case ErrorKind::ConvergenceFailure: return "ConvergenceFailure";
    case ErrorKind::DegenerateDenominator: return "DegenerateDenominator";
    case ErrorKind::MissingAlignedPoint: return "MissingAlignedPoint";
    case ErrorKind::NonConvergence: return "NonConvergence";
    case ErrorKind::NegativeLoss: return "NegativeLoss";
    case ErrorKind::InsufficientPoints: return "InsufficientPoints";
    case ErrorKind::BiasNotFound: return "BiasNotFound";
    case ErrorKind::NoSwitch: return "NoSwitch";
    case ErrorKind::DegenerateFit: return "DegenerateFit";
    case ErrorKind::FitFailure: return "FitFailure";
    case ErrorKind::GranularityViolation: return "GranularityViolation";
    case ErrorKind::Config: return "Config";
  }
  return "Unknown";
}

constexpr ErrorCategory category_of(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config:
      return ErrorCategory::Config;
    case ErrorKind::NoGuidedMode:
    case ErrorKind::ConvergenceFailure:
    case ErrorKind::DegenerateDenominator:
    case ErrorKind::NonConvergence:
    case ErrorKind::DegenerateFit:
    case ErrorKind::FitFailure:
      return ErrorCategory::Numerical;
    default:
      return ErrorCategory::DataContract;
  }
}

constexpr std::string_view to_string(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::Config: return "config";
    case ErrorCategory::Numerical: return "numerical";
    case ErrorCategory::DataContract: return "data_contract";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind),
        message_(message) {}

  ErrorKind kind() const noexcept { return kind_; }
  /// The message without the kind prefix.
  const std::string& message() const noexcept { return message_; }
  ErrorCategory category() const noexcept { return category_of(kind_); }
  int exit_code() const noexcept { return static_cast<int>(category()); }

 private:
  ErrorKind kind_;
  std::string message_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace snspd
