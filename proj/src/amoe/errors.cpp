#include "amoe/errors.hpp"

namespace amoe {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kInvalidArgument:
      return "InvalidArgument";
    case ErrorCode::kCholeskyFailure:
      return "CholeskyFailure";
    case ErrorCode::kDegenerateAncestors:
      return "DegenerateAncestors";
    case ErrorCode::kAbsoluteContinuityViolation:
      return "AbsoluteContinuityViolation";
    case ErrorCode::kDegenerateNormalizer:
      return "DegenerateNormalizer";
    case ErrorCode::kFilterCollapse:
      return "FilterCollapse";
    case ErrorCode::kInvalidObservation:
      return "InvalidObservation";
    case ErrorCode::kConfig:
      return "Config";
    case ErrorCode::kIo:
      return "Io";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void require(bool condition, const std::string& message) {
  if (!condition) {
    throw Error(ErrorCode::kInvalidArgument, message);
  }
}

}  // namespace amoe
