#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace smib {

/// Failure categories raised by the library. Each maps to one error condition
/// named in the module contracts.
enum class ErrorKind {
  kInvalidParameter,
  kManifoldViolation,
  kCountMismatch,
  kDegenerateDenominator,
  kAssumptionViolated,
  kNotAutonomous,
  kConvergenceFailure,
  kStepUnderflow,
  kNonFinite,
  kOutOfRegion,
  kCertificateRequired,
  kSoundnessViolation,
  kParseError,
  kValidationError,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidParameter: return "InvalidParameter";
    case ErrorKind::kManifoldViolation: return "ManifoldViolation";
    case ErrorKind::kCountMismatch: return "CountMismatch";
    case ErrorKind::kDegenerateDenominator: return "DegenerateDenominator";
    case ErrorKind::kAssumptionViolated: return "AssumptionViolated";
    case ErrorKind::kNotAutonomous: return "NotAutonomous";
    case ErrorKind::kConvergenceFailure: return "ConvergenceFailure";
    case ErrorKind::kStepUnderflow: return "StepUnderflow";
    case ErrorKind::kNonFinite: return "NonFinite";
    case ErrorKind::kOutOfRegion: return "OutOfRegion";
    case ErrorKind::kCertificateRequired: return "CertificateRequired";
    case ErrorKind::kSoundnessViolation: return "SoundnessViolation";
    case ErrorKind::kParseError: return "ParseError";
    case ErrorKind::kValidationError: return "ValidationError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace smib
