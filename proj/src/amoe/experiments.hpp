#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "amoe/adaptation.hpp"
#include "amoe/diagnostics.hpp"
#include "amoe/models.hpp"
#include "amoe/serialization.hpp"
#include "amoe/smc.hpp"

namespace amoe {

struct ProposalSettings {
  StratumFamily family;
  Index components = 2;
  bool logistic = true;
  bool pooled = false;
};

struct AdaptationSettings {
  Index iterations = 20;
  Index sample_size = 1000;
  Index initial_sample_size = 2000;
  StepRule step_rule = StepRule::kConstant;
  double step_scale = 0.1;
  double step_exponent = 0.6;
  bool literal_pooling = false;
  bool literal_hessian = false;
  bool literal_gating = false;
  Index pilot_em_iterations = 0;  // batch-EM rounds fitting theta_0 to the pilot batch

  [[nodiscard]] AdaptationConfig build(bool pooled) const;
};

struct ExperimentConfig {
  std::string command;
  std::string model_id;
  Json model_params;
  Vector observation;
  Index ancestors = 20000;
  ProposalSettings proposal;
  AdaptationSettings adaptation;
  Index kld_reference_n = 10000;
  Index kld_every = 1;
  Index reference_level_n = 100000;
  double student_nu = 4.0;  // Student-t degrees of freedom for compare-families
  std::vector<Index> proportion_iterations;
  // Filter runs.
  Index particles = 2000;
  Index steps = 50;
  Index replicates = 1;
  std::string observations_path;
  double budget_fraction = 0.0;
  Index stride = 1;
  bool warm_start = true;
  // Output.
  std::uint64_t seed = 1;
  std::string out = "out";
  std::string format = "csv";
  int threads = 0;

  Json resolved;  // the full resolved configuration, as written to sidecars
};

// Default configuration for a subcommand; `model_id` may be empty to pick the
// subcommand's default model.
Json default_config(const std::string& command, const std::string& model_id);

// Merges `user` over the defaults and validates. Errors are Error(kConfig).
ExperimentConfig resolve_config(const std::string& command, const Json& user);

std::unique_ptr<StateSpaceModel> build_model(const std::string& id, const Json& params);

struct AdaptDemoResult {
  AdaptationTrace trace;
  MixtureParams theta;
  std::vector<double> pilot_weights;
  std::map<Index, std::vector<double>> reference_weights;  // per trace row
  std::optional<KldEstimate> optimal_level;
};

AdaptDemoResult run_adapt_demo(const ExperimentConfig& config);

struct FilterComparison {
  std::vector<Vector> observations;
  FilterTrace bootstrap;
  FilterTrace adaptive;
};

FilterConfig bootstrap_filter_config(const ExperimentConfig& config);
FilterConfig adaptive_filter_config(const ExperimentConfig& config);
FilterComparison run_filter_comparison(const ExperimentConfig& config, const StateSpaceModel& model,
                                       const std::vector<Vector>& observations, std::uint64_t seed);

struct FamilyComparison {
  AdaptationTrace gaussian;
  AdaptationTrace student;
  KldEstimate prior_level;
  KldEstimate optimal_level;
};

FamilyComparison run_family_comparison(const ExperimentConfig& config);

// Runs a subcommand end to end, writing its files; returns a JSON summary.
Json execute_command(const std::string& command, const Json& user_config);

}  // namespace amoe
