// Command-line front end over the C API.

#include <CLI11.hpp>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "amoe_smc.h"

namespace {

using Json = nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> format;
  std::optional<int> threads;
  std::optional<std::string> model;
  std::optional<std::string> observations;
  std::vector<std::string> only;
};

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::optional<int> env_threads() {
  const char* value = std::getenv("AMOE_SMC_THREADS");
  if (value == nullptr || *value == '\0') {
    return std::nullopt;
  }
  try {
    std::size_t used = 0;
    const int threads = std::stoi(value, &used);
    if (used != std::string(value).size() || threads < 0) {
      throw UsageError("");
    }
    return threads;
  } catch (const std::exception&) {
    throw UsageError(std::string("AMOE_SMC_THREADS must be a nonnegative integer, got '") + value + "'");
  }
}

Json load_config(const Options& options) {
  Json config = Json::object();
  if (!options.config_path.empty()) {
    std::ifstream in(options.config_path);
    if (!in) {
      throw UsageError("cannot read config file '" + options.config_path + "'");
    }
    try {
      config = Json::parse(in);
    } catch (const Json::parse_error& e) {
      throw UsageError("config file '" + options.config_path + "' is not valid JSON: " + e.what());
    }
    if (!config.is_object()) {
      throw UsageError("config file must hold a JSON object");
    }
  }
  if (options.seed) {
    config["seed"] = *options.seed;
  }
  if (options.out) {
    config["out"] = *options.out;
  }
  if (options.format) {
    config["format"] = *options.format;
  }
  if (const auto threads = options.threads ? options.threads : env_threads()) {
    config["threads"] = *threads;
  }
  if (options.model) {
    config["model"]["id"] = *options.model;
  }
  if (options.observations) {
    config["filter"]["observations"] = *options.observations;
  }
  return config;
}

int report(amoe_status status) {
  std::cerr << "amoe-smc: " << amoe_status_name(status) << ": " << amoe_last_error() << "\n";
  return status == AMOE_ERR_CONFIG ? kExitUsage : kExitRuntime;
}

int run_experiment(const std::string& command, const Options& options) {
  const std::string config = load_config(options).dump();
  char* summary = nullptr;
  const amoe_status status = amoe_run_experiment(command.c_str(), config.c_str(), &summary);
  if (status != AMOE_OK) {
    return report(status);
  }
  std::cout << summary << "\n";
  amoe_string_free(summary);
  return kExitOk;
}

int run_selftest(const Options& options) {
  const auto threads = options.threads ? options.threads : env_threads();
  if (threads) {
    if (const amoe_status status = amoe_set_num_threads(*threads); status != AMOE_OK) {
      return report(status);
    }
  }
  std::vector<std::string> ids = options.only;
  if (ids.empty()) {
    char* raw = nullptr;
    if (const amoe_status status = amoe_selftest_ids(&raw); status != AMOE_OK) {
      return report(status);
    }
    ids = Json::parse(raw).get<std::vector<std::string>>();
    amoe_string_free(raw);
  }
  bool all = true;
  for (const auto& id : ids) {
    int passed = 0;
    char* detail = nullptr;
    const amoe_status status = amoe_selftest_run(id.c_str(), &passed, &detail);
    if (status != AMOE_OK) {
      if (status == AMOE_ERR_INVALID_ARGUMENT) {
        std::cerr << "amoe-smc: " << amoe_last_error() << "\n";
        return kExitUsage;
      }
      return report(status);
    }
    std::cout << id << " " << (passed ? "PASS" : "FAIL") << " " << detail << std::endl;
    amoe_string_free(detail);
    all = all && passed != 0;
  }
  return all ? kExitOk : kExitRuntime;
}

void add_common(CLI::App* sub, Options& options) {
  sub->add_option("--config", options.config_path, "JSON configuration file")->check(CLI::ExistingFile);
  sub->add_option("--seed", options.seed, "Random seed");
  sub->add_option("--out", options.out, "Output directory");
  sub->add_option("--format", options.format, "Output format")->check(CLI::IsMember({"csv", "json"}));
  sub->add_option("--threads", options.threads, "Worker threads (0: runtime default)")
      ->check(CLI::NonNegativeNumber);
  sub->add_option("--model", options.model, "Model id: linear_gaussian, bessel or tobit");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive auxiliary particle filters with mixture-of-experts proposals"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(amoe_version()));
  Options options;

  auto* adapt = app.add_subcommand("adapt-demo", "Single update step: adapt a proposal and trace its KLD");
  add_common(adapt, options);
  auto* filter = app.add_subcommand("filter", "Adaptive filter against a bootstrap filter");
  add_common(filter, options);
  filter->add_option("--observations", options.observations, "Observation CSV (simulated when omitted)")
      ->check(CLI::ExistingFile);
  auto* families = app.add_subcommand("compare-families", "Gaussian against Student-t experts");
  add_common(families, options);
  auto* selftest = app.add_subcommand("selftest", "Run the acceptance suite");
  selftest->add_option("--threads", options.threads, "Worker threads (0: runtime default)")
      ->check(CLI::NonNegativeNumber);
  selftest->add_option("--only", options.only, "Criterion ids to run");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (selftest->parsed()) {
      return run_selftest(options);
    }
    for (auto* sub : {adapt, filter, families}) {
      if (sub->parsed()) {
        return run_experiment(sub->get_name(), options);
      }
    }
  } catch (const UsageError& e) {
    std::cerr << "amoe-smc: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "amoe-smc: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
