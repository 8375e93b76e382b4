#pragma once

#include <string>
#include <vector>

namespace amoe::selftest {

struct CriterionResult {
  std::string id;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
  double limit_seconds = 0.0;
};

std::vector<std::string> criterion_ids();

// Runs one acceptance criterion; unknown ids throw Error(kInvalidArgument).
CriterionResult run_criterion(const std::string& id);

}  // namespace amoe::selftest
