#pragma once

#include <cstdint>

namespace amoe {

// Recoverable numerical events. Counters are process-wide and thread-safe.
enum class Warning : int {
  kCovarianceJitter = 0,
  kResponsibilityUnderflow,
  kPseudoInverse,
  kNewtonFallback,
  kComponentReset,
  kUnreliableKld,
  kWarmStartReset,
  kCount,
};

const char* to_string(Warning warning) noexcept;
void note_warning(Warning warning, std::uint64_t times = 1) noexcept;
std::uint64_t warning_count(Warning warning) noexcept;
void reset_warnings() noexcept;

}  // namespace amoe
