// Runs the acceptance criteria and prints one line per criterion.

#include <iostream>
#include <string>
#include <vector>

#include "selftest/acceptance.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> ids;
  for (int k = 1; k < argc; ++k) {
    const std::string arg = argv[k];
    if (arg == "--only" && k + 1 < argc) {
      ids.emplace_back(argv[++k]);
    } else {
      std::cerr << "usage: amoe_acceptance [--only ID]...\n";
      return 2;
    }
  }
  if (ids.empty()) {
    ids = amoe::selftest::criterion_ids();
  }
  bool all = true;
  for (const auto& id : ids) {
    const auto result = amoe::selftest::run_criterion(id);
    std::cout << result.id << ": " << (result.passed ? "PASS" : "FAIL") << " | " << result.detail << std::endl;
    all = all && result.passed;
  }
  return all ? 0 : 1;
}
