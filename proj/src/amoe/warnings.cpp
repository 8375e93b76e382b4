#include "amoe/warnings.hpp"

#include <array>
#include <atomic>

namespace amoe {
namespace {

constexpr auto kCount = static_cast<std::size_t>(Warning::kCount);

std::array<std::atomic<std::uint64_t>, kCount>& counters() {
  static std::array<std::atomic<std::uint64_t>, kCount> values{};
  return values;
}

}  // namespace

const char* to_string(Warning warning) noexcept {
  switch (warning) {
    case Warning::kCovarianceJitter:
      return "covariance_jitter";
    case Warning::kResponsibilityUnderflow:
      return "responsibility_underflow";
    case Warning::kPseudoInverse:
      return "pseudo_inverse";
    case Warning::kNewtonFallback:
      return "newton_fallback";
    case Warning::kComponentReset:
      return "component_reset";
    case Warning::kUnreliableKld:
      return "unreliable_kld";
    case Warning::kWarmStartReset:
      return "warm_start_reset";
    case Warning::kCount:
      break;
  }
  return "unknown";
}

void note_warning(Warning warning, std::uint64_t times) noexcept {
  counters()[static_cast<std::size_t>(warning)].fetch_add(times, std::memory_order_relaxed);
}

std::uint64_t warning_count(Warning warning) noexcept {
  return counters()[static_cast<std::size_t>(warning)].load(std::memory_order_relaxed);
}

void reset_warnings() noexcept {
  for (auto& counter : counters()) {
    counter.store(0, std::memory_order_relaxed);
  }
}

}  // namespace amoe
