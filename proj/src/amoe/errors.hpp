#pragma once

#include <stdexcept>
#include <string>

namespace amoe {

enum class ErrorCode {
  kInvalidArgument = 1,
  kCholeskyFailure,
  kDegenerateAncestors,
  kAbsoluteContinuityViolation,
  kDegenerateNormalizer,
  kFilterCollapse,
  kInvalidObservation,
  kConfig,
  kIo,
};

const char* to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Throws Error(kInvalidArgument) when the condition does not hold.
void require(bool condition, const std::string& message);

}  // namespace amoe
