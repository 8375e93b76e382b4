#pragma once

#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "amoe/random.hpp"
#include "amoe/sample.hpp"
#include "amoe/strata.hpp"

namespace amoe {

struct ConstantGating {
  Vector weights;  // simplex of length d
};

// Row j holds beta_j^T for j < d; the last expert has logit zero.
struct LogisticGating {
  Matrix beta;  // (d - 1) x (p + 1)
};

using GatingParams = std::variant<ConstantGating, LogisticGating>;

struct MixtureParams {
  GatingParams gating;
  std::vector<ExpertParams> experts;
  StratumFamily family;
  bool pooled = false;

  [[nodiscard]] Index components() const { return static_cast<Index>(experts.size()); }
  [[nodiscard]] bool logistic() const { return std::holds_alternative<LogisticGating>(gating); }
  [[nodiscard]] Index ancestor_dim() const { return experts.front().ancestor_dim(); }
  [[nodiscard]] Index child_dim() const { return experts.front().child_dim(); }
};

void validate(const GatingParams& gating, Index components, Index ancestor_dim);
void validate(const MixtureParams& theta);

Vector gating_weights(const GatingParams& gating, const Vector& ancestor);

// A transition proposal r(x, x'): density and sampler.
class ProposalKernel {
 public:
  virtual ~ProposalKernel() = default;

  [[nodiscard]] virtual double log_density(const Vector& ancestor, const Vector& child) const = 0;
  // `component`, when non-null, receives the mixture component used (or -1).
  virtual Vector sample(const Vector& ancestor, Rng& rng, Index* component) const = 0;
  [[nodiscard]] virtual std::string name() const = 0;
};

// The mixture of experts with every stratum factorized once.
class MixtureKernel final : public ProposalKernel {
 public:
  explicit MixtureKernel(MixtureParams theta);

  [[nodiscard]] const MixtureParams& params() const { return theta_; }
  [[nodiscard]] Index components() const { return theta_.components(); }

  // Per-point quantities needed by the EM accumulators.
  struct Evaluation {
    double log_density = 0.0;
    Vector gating;            // alpha_j(x)
    Vector responsibilities;  // r_j(x, x')
    Vector u_mean;            // E[u | x, x', j]
    bool underflow = false;
  };

  void evaluate(const Vector& ext_ancestor, const Vector& child, Evaluation& out) const;
  [[nodiscard]] Vector log_gating(const Vector& ext_ancestor) const;

  [[nodiscard]] double log_density(const Vector& ancestor, const Vector& child) const override;
  Vector sample(const Vector& ancestor, Rng& rng, Index* component) const override;
  [[nodiscard]] std::string name() const override { return "mixture"; }

  [[nodiscard]] Vector responsibilities(const Vector& ancestor, const Vector& child) const;

 private:
  MixtureParams theta_;
  std::vector<Stratum> strata_;
  Vector log_constant_gating_;
};

double proposal_log_density(const MixtureParams& theta, const Vector& ancestor, const Vector& child);
Vector responsibilities(const MixtureParams& theta, const Vector& ancestor, const Vector& child);

// Adjustment multiplier psi, strictly positive on the ancestors.
using AdjustmentFn = std::function<double(const Vector&)>;
// log l(x, x'); -infinity encodes a zero kernel value.
using LogKernelFn = std::function<double(const Vector&, const Vector&)>;

// Ancestor-selection law proportional to omega_i * psi(xi_i).
class AuxiliaryProposal {
 public:
  // An empty `psi` means psi == 1.
  explicit AuxiliaryProposal(const WeightedSample& ancestors, const AdjustmentFn& psi = {});
  // Precomputed adjustment values, one per ancestor.
  AuxiliaryProposal(const WeightedSample& ancestors, std::vector<double> psi_values);

  [[nodiscard]] const WeightedSample& ancestors() const { return ancestors_; }
  [[nodiscard]] Index size() const { return ancestors_.size(); }
  [[nodiscard]] double adjustment(Index i) const { return psi_[static_cast<std::size_t>(i)]; }
  [[nodiscard]] double log_adjustment(Index i) const { return log_psi_[static_cast<std::size_t>(i)]; }
  // Normalized probability of selecting ancestor i.
  [[nodiscard]] double index_probability(Index i) const;
  [[nodiscard]] Index draw_index(Rng& rng) const;
  [[nodiscard]] const Vector& extended(Index i) const { return extended_[static_cast<std::size_t>(i)]; }

 private:
  void finish();

  WeightedSample ancestors_;
  std::vector<double> psi_;
  std::vector<double> log_psi_;
  std::vector<double> cumulative_;
  std::vector<Vector> extended_;
};

struct ProposalDraw {
  Index ancestor = 0;
  Vector child;
  Index component = -1;
};

// n i.i.d. draws of (index, child); block substreams keep the output
// independent of the thread count.
std::vector<ProposalDraw> propose(const ProposalKernel& kernel, const AuxiliaryProposal& aux, Index n,
                                  Rng& rng);

double log_importance_weight(const ProposalKernel& kernel, const LogKernelFn& log_kernel,
                             const AuxiliaryProposal& aux, Index ancestor, const Vector& child);
double importance_weight(const ProposalKernel& kernel, const LogKernelFn& log_kernel,
                         const AuxiliaryProposal& aux, Index ancestor, const Vector& child);

}  // namespace amoe
