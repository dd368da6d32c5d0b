#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace actsens {

enum class ErrorKind {
  InvalidArgument,
  StepSizeUnderflow,
  NonFiniteState,
  PoleViolation,
  DomainViolation,
  DegenerateState,
  MissingDerivative,
  MissingSecondDerivative,
  InvalidBounds,
  ZeroVariance,
  NoInteriorMaximum,
  MaxIterationsExceeded,
  ConfigError,
  IoError,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::StepSizeUnderflow: return "StepSizeUnderflow";
    case ErrorKind::NonFiniteState: return "NonFiniteState";
    case ErrorKind::PoleViolation: return "PoleViolation";
    case ErrorKind::DomainViolation: return "DomainViolation";
    case ErrorKind::DegenerateState: return "DegenerateState";
    case ErrorKind::MissingDerivative: return "MissingDerivative";
    case ErrorKind::MissingSecondDerivative: return "MissingSecondDerivative";
    case ErrorKind::InvalidBounds: return "InvalidBounds";
    case ErrorKind::ZeroVariance: return "ZeroVariance";
    case ErrorKind::NoInteriorMaximum: return "NoInteriorMaximum";
    case ErrorKind::MaxIterationsExceeded: return "MaxIterationsExceeded";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-readable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind), detail_(what) {}

  ErrorKind kind() const noexcept { return kind_; }
  /// The message without the kind prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace actsens
