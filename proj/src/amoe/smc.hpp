#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "amoe/adaptation.hpp"
#include "amoe/models.hpp"
#include "amoe/sample.hpp"

namespace amoe {

enum class ProposalMode { kPrior, kOptimal, kAdapted };
enum class AdjustmentMode { kUniform, kOptimal };

struct AdaptedSettings {
  AdaptationConfig adaptation;
  Index components = 2;
  StratumFamily family;
  bool logistic = true;
  bool pooled = false;
  bool warm_start = true;
  Index stride = 1;               // adapt every `stride` steps
  double budget_fraction = 0.0;   // alpha; spend alpha * N draws on adaptation
  std::optional<MixtureParams> initial;  // used when no warm start is available
};

struct FilterConfig {
  Index n_particles = 1000;
  ProposalMode proposal = ProposalMode::kPrior;
  AdjustmentMode adjustment = AdjustmentMode::kUniform;
  AdaptedSettings adapted;
};

void validate(const FilterConfig& config);

struct StepOutput {
  WeightedSample sample;
  std::optional<MixtureParams> theta;
  std::optional<AdaptationTrace> trace;
};

// One auxiliary particle filter update. In adapted mode the proposal is
// fitted first; `warm` seeds it and `adapt_now == false` reuses `warm` as is.
StepOutput apf_step(const WeightedSample& sample, const StateSpaceModel& model, const Vector& y,
                    const FilterConfig& config, Rng& rng, const MixtureParams* warm = nullptr,
                    bool adapt_now = true);

// Scales the weights to sum to one; the last positive entry absorbs the rounding remainder.
WeightedSample normalize_weights(WeightedSample sample);

Vector weighted_mean(const WeightedSample& sample);

struct StepRecord {
  Index step = 0;
  double ess = 0.0;
  double relative_ess = 0.0;
  double negated_entropy = 0.0;
  double cpu_ms = 0.0;
  Vector estimate;
};

struct FilterTrace {
  std::vector<StepRecord> steps;
  bool collapsed = false;
  std::string error;
};

FilterTrace run_filter(const StateSpaceModel& model, const std::vector<Vector>& observations,
                       const FilterConfig& config, Rng& rng);

// Simulates a state trajectory of `steps` transitions from the initial law
// and the matching observations (one per transition).
struct Simulation {
  std::vector<Vector> states;
  std::vector<Vector> observations;
};

Simulation simulate(const StateSpaceModel& model, Index steps, Rng& rng);

}  // namespace amoe
