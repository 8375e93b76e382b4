#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "amoe/diagnostics.hpp"
#include "amoe/errors.hpp"
#include "amoe/experts.hpp"

namespace amoe {

// Robbins-Monro state: expected sufficient statistics of every expert,
// responsibility masses, logistic-gating gradient/Hessian statistics and the
// normalizing-constant iterate. The Hessian is indexed row-major over
// (expert j, coordinate m), i.e. entry j * (p + 1) + m.
struct SuffStats {
  std::vector<ExpertSuffStat> s;
  Vector p;
  std::optional<Matrix> t;  // (d - 1) x (p + 1)
  std::optional<Matrix> v;  // (d - 1)(p + 1) square
  double c = 0.0;

  static SuffStats zeros(Index components, Index ancestor_dim, Index child_dim, bool logistic);

  [[nodiscard]] bool initialized() const { return !s.empty(); }
  [[nodiscard]] Index components() const { return p.size(); }

  // Linear operations on (s, p, t, v); c is left untouched.
  SuffStats& operator+=(const SuffStats& other);
  SuffStats& operator*=(double factor);
};

struct AdaptationConfig {
  Index iterations = 0;               // L
  std::vector<Index> sample_sizes;    // N_0 .. N_{L-1}
  std::vector<double> step_sizes;     // lambda_1 .. lambda_L; the first update always uses 1
  bool pooled = false;
  double min_responsibility_mass = 1e-6;  // relative to the total mass
  bool literal_pooling = false;     // divide the pooled scatter by d
  bool literal_hessian = false;     // diagonal blocks scaled by the last gating weight
  bool freeze_gating = false;             // keep the gating parameters fixed
  // Keep the averaged gating gradient as is after each Newton step instead of
  // moving it to the new expansion point.
  bool literal_gating = false;
};

enum class StepRule { kConstant, kPower };

// Constant sample size n with the first batch of size n0, and step sizes
// scale / sqrt(L) (constant rule) or l^(-exponent) (power rule).
AdaptationConfig make_adaptation_config(Index iterations, Index n, Index n0, StepRule rule, double scale,
                                        double exponent = 0.6);
void validate(const AdaptationConfig& config);

struct WeightedPair {
  Vector ext_ancestor;  // (x, 1)
  Vector child;
  double weight = 0.0;
};

// Un-normalized statistics of one batch.
struct StatisticsBatch {
  SuffStats increment;
  double weight_sum = 0.0;
  Index draws = 0;
  Index underflows = 0;
  std::vector<double> weights;
};

StatisticsBatch accumulate_weighted_pairs(const MixtureKernel& theta, const std::vector<WeightedPair>& pairs,
                                          bool literal_hessian = false);

// Draws n pairs from `sampler` (theta itself when null), weights them against
// the kernel and accumulates the statistics with responsibilities under theta.
StatisticsBatch accumulate_is_statistics(const MixtureKernel& theta, const AuxiliaryProposal& aux,
                                         const LogKernelFn& log_kernel, Index n, Rng& rng,
                                         const ProposalKernel* sampler = nullptr,
                                         bool literal_hessian = false);

SuffStats robbins_monro_update(const SuffStats& state, const SuffStats& increment, double weight_sum, Index n,
                               double step);

MixtureParams m_step(const SuffStats& stats, const MixtureParams& previous, const AdaptationConfig& config);

// Batch EM on a fixed weighted sample: `iterations` rounds of statistics
// under the current theta followed by an M-step.
MixtureParams fit_mixture(const MixtureParams& initial, const std::vector<WeightedPair>& pairs, Index iterations,
                          const AdaptationConfig& config);

// Moves the averaged gating gradient to the expansion point of `after` with
// the quadratic model: t <- t + v (beta_after - beta_before).
void recenter_gating_gradient(SuffStats& stats, const MixtureParams& before, const MixtureParams& after);

// l(s, p; theta) for constant gating: sum_j p_j log beta_j - p_j A(eta_j) + Tr(B(eta_j)^T s_j).
double expected_complete_loglik(const SuffStats& stats, const MixtureParams& theta);

struct IterationRecord {
  Index iteration = 0;
  MixtureParams theta;
  std::string proposal;  // "pilot" for a pilot batch, "theta" otherwise
  double weight_sum = 0.0;
  double ess = 0.0;
  Index draws = 0;
  std::optional<KldEstimate> kld;
  std::vector<double> weights;  // importance weights of the batch, when requested
};

struct AdaptationTrace {
  std::vector<IterationRecord> iterations;
};

struct AdaptationResult {
  MixtureParams theta;
  AdaptationTrace trace;
};

// Thrown when an iteration fails; carries the trace up to the failure.
class AdaptationError : public Error {
 public:
  AdaptationError(const Error& cause, AdaptationTrace trace)
      : Error(cause.code(), cause.what()), trace_(std::move(trace)) {}

  [[nodiscard]] const AdaptationTrace& trace() const { return trace_; }

 private:
  AdaptationTrace trace_;
};

using InitializerFn =
    std::function<MixtureParams(const std::vector<ProposalDraw>& draws, const std::vector<double>& weights)>;
using DiagnosticsFn = std::function<void(const ProposalKernel& proposal, IterationRecord& record)>;

struct AdaptOptions {
  // Draws the first batch instead of theta_0 (e.g. the prior kernel).
  const ProposalKernel* pilot = nullptr;
  // Replaces the initial theta using the first batch.
  InitializerFn initializer;
  // Called once per trace row with the proposal of that row.
  DiagnosticsFn diagnostics;
  bool keep_weights = false;
};

AdaptationResult adapt(const MixtureParams& initial, const AuxiliaryProposal& aux, const LogKernelFn& log_kernel,
                       const AdaptationConfig& config, Rng& rng, const AdaptOptions& options = {});

// Exact expectations of the statistics under theta; weight_sum is the
// normalizing constant and `draws` the matching count.
using ExpectationFn = std::function<StatisticsBatch(const MixtureKernel& theta)>;

// The adaptation recursion with exact expectations in place of the Monte
// Carlo batches.
AdaptationResult adapt_exact(const MixtureParams& initial, const ExpectationFn& expectation,
                             const AdaptationConfig& config);

// Max-norm of the mean field h(s, p) = s_bar(theta_bar(s, p)) - (s, p).
double mean_field_residual(const SuffStats& stats, const MixtureParams& shape, const ExpectationFn& expectation,
                           const AdaptationConfig& config);

// Starting point following the usual guidelines: null gating slopes and
// regression slopes, intercepts spread around the weighted mean of the
// children, and every covariance equal to the weighted covariance of the
// children (so each expert is overspread).
MixtureParams initial_mixture(const std::vector<Vector>& children, const std::vector<double>& weights,
                              Index components, Index ancestor_dim, const StratumFamily& family, bool logistic,
                              bool pooled);

}  // namespace amoe
