#include "amoe/experts.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "amoe/errors.hpp"
#include "amoe/linalg.hpp"
#include "amoe/parallel.hpp"
#include "amoe/warnings.hpp"

namespace amoe {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Normalizes log-weights into `out` and returns their log-sum-exp.
double normalize_logs(const Vector& logs, Vector& out) {
  const double peak = logs.maxCoeff();
  if (!std::isfinite(peak)) {
    out.setZero(logs.size());
    return peak;
  }
  out = (logs.array() - peak).exp();
  const double total = out.sum();
  out /= total;
  return peak + std::log(total);
}

}  // namespace

void validate(const GatingParams& gating, Index components, Index ancestor_dim) {
  if (const auto* constant = std::get_if<ConstantGating>(&gating)) {
    require(constant->weights.size() == components, "constant gating needs one weight per expert");
    require((constant->weights.array() >= 0.0).all() && constant->weights.allFinite(),
            "constant gating weights must be nonnegative");
    require(std::abs(constant->weights.sum() - 1.0) <= 1e-12, "constant gating weights must sum to 1");
  } else {
    const auto& beta = std::get<LogisticGating>(gating).beta;
    require(beta.rows() == components - 1 && beta.cols() == ancestor_dim + 1,
            "logistic gating needs a (d - 1) x (p + 1) matrix");
    require(beta.allFinite(), "logistic gating parameters must be finite");
  }
}

void validate(const MixtureParams& theta) {
  require(!theta.experts.empty(), "mixture needs at least one expert");
  validate(theta.family);
  const Index p = theta.ancestor_dim();
  const Index pc = theta.child_dim();
  for (const auto& expert : theta.experts) {
    validate(expert);
    require(expert.ancestor_dim() == p && expert.child_dim() == pc, "experts must share dimensions");
  }
  validate(theta.gating, theta.components(), p);
  if (theta.pooled) {
    for (const auto& expert : theta.experts) {
      require((expert.sigma - theta.experts.front().sigma).cwiseAbs().maxCoeff() <=
                  1e-12 * (1.0 + expert.sigma.cwiseAbs().maxCoeff()),
              "pooled mixtures must share one covariance");
    }
  }
}

Vector gating_weights(const GatingParams& gating, const Vector& ancestor) {
  if (const auto* constant = std::get_if<ConstantGating>(&gating)) {
    return constant->weights;
  }
  const auto& beta = std::get<LogisticGating>(gating).beta;
  require(beta.cols() == ancestor.size() + 1, "ancestor dimension does not match the gating");
  Vector logits(beta.rows() + 1);
  logits.head(beta.rows()) = beta * extend(ancestor);
  logits(beta.rows()) = 0.0;
  Vector out;
  normalize_logs(logits, out);
  return out;
}

MixtureKernel::MixtureKernel(MixtureParams theta) : theta_(std::move(theta)) {
  validate(theta_);
  strata_.reserve(theta_.experts.size());
  for (const auto& expert : theta_.experts) {
    strata_.emplace_back(expert, theta_.family);
  }
  if (const auto* constant = std::get_if<ConstantGating>(&theta_.gating)) {
    log_constant_gating_ = constant->weights.array().log();
  }
}

Vector MixtureKernel::log_gating(const Vector& ext_ancestor) const {
  if (!theta_.logistic()) {
    return log_constant_gating_;
  }
  const auto& beta = std::get<LogisticGating>(theta_.gating).beta;
  Vector logits(beta.rows() + 1);
  logits.head(beta.rows()) = beta * ext_ancestor;
  logits(beta.rows()) = 0.0;
  const double lse = log_sum_exp({logits.data(), static_cast<std::size_t>(logits.size())});
  return logits.array() - lse;
}

void MixtureKernel::evaluate(const Vector& ext_ancestor, const Vector& child, Evaluation& out) const {
  const Index d = components();
  const Vector log_alpha = log_gating(ext_ancestor);
  out.gating = log_alpha.array().exp();
  out.u_mean.resize(d);
  Vector logs(d);
  for (Index j = 0; j < d; ++j) {
    const auto eval = strata_[static_cast<std::size_t>(j)].evaluate(ext_ancestor, child);
    logs(j) = log_alpha(j) + eval.log_density;
    out.u_mean(j) = strata_[static_cast<std::size_t>(j)].u_mean(eval.mahalanobis_sq);
  }
  out.log_density = normalize_logs(logs, out.responsibilities);
  out.underflow = !std::isfinite(out.log_density);
  if (out.underflow) {
    out.responsibilities = out.gating;
  }
}

double MixtureKernel::log_density(const Vector& ancestor, const Vector& child) const {
  const Vector ext = extend(ancestor);
  const Vector log_alpha = log_gating(ext);
  double peak = kNegInf;
  Vector logs(components());
  for (Index j = 0; j < components(); ++j) {
    logs(j) = log_alpha(j) + strata_[static_cast<std::size_t>(j)].log_density(ext, child);
    peak = std::max(peak, logs(j));
  }
  if (!std::isfinite(peak)) {
    return kNegInf;
  }
  return peak + std::log((logs.array() - peak).exp().sum());
}

Vector MixtureKernel::responsibilities(const Vector& ancestor, const Vector& child) const {
  Evaluation eval;
  evaluate(extend(ancestor), child, eval);
  if (eval.underflow) {
    note_warning(Warning::kResponsibilityUnderflow);
  }
  return eval.responsibilities;
}

Vector MixtureKernel::sample(const Vector& ancestor, Rng& rng, Index* component) const {
  const Vector ext = extend(ancestor);
  const Vector alpha = log_gating(ext).array().exp();
  const double u = rng.uniform() * alpha.sum();
  Index j = 0;
  double acc = alpha(0);
  while (acc <= u && j + 1 < components()) {
    ++j;
    acc += alpha(j);
  }
  // Guard against rounding landing on a zero-weight expert.
  while (alpha(j) <= 0.0 && j > 0) {
    --j;
  }
  if (component != nullptr) {
    *component = j;
  }
  return strata_[static_cast<std::size_t>(j)].sample(ext, rng);
}

double proposal_log_density(const MixtureParams& theta, const Vector& ancestor, const Vector& child) {
  return MixtureKernel(theta).log_density(ancestor, child);
}

Vector responsibilities(const MixtureParams& theta, const Vector& ancestor, const Vector& child) {
  return MixtureKernel(theta).responsibilities(ancestor, child);
}

AuxiliaryProposal::AuxiliaryProposal(const WeightedSample& ancestors, const AdjustmentFn& psi)
    : ancestors_(ancestors) {
  validate(ancestors_);
  psi_.resize(static_cast<std::size_t>(ancestors_.size()), 1.0);
  if (psi) {
    for (Index i = 0; i < ancestors_.size(); ++i) {
      psi_[static_cast<std::size_t>(i)] = psi(ancestors_.particle(i));
    }
  }
  finish();
}

AuxiliaryProposal::AuxiliaryProposal(const WeightedSample& ancestors, std::vector<double> psi_values)
    : ancestors_(ancestors), psi_(std::move(psi_values)) {
  validate(ancestors_);
  require(static_cast<Index>(psi_.size()) == ancestors_.size(), "one adjustment value per ancestor");
  finish();
}

void AuxiliaryProposal::finish() {
  const auto n = psi_.size();
  log_psi_.resize(n);
  cumulative_.resize(n);
  extended_.resize(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double psi = psi_[i];
    require(std::isfinite(psi) && psi >= 0.0, "adjustment multipliers must be finite and nonnegative");
    log_psi_[i] = std::log(psi);
    total += ancestors_.weights[i] * psi;
    cumulative_[i] = total;
    extended_[i] = extend(ancestors_.particle(static_cast<Index>(i)));
  }
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw Error(ErrorCode::kDegenerateAncestors, "ancestor selection weights are all zero");
  }
}

double AuxiliaryProposal::index_probability(Index i) const {
  const auto k = static_cast<std::size_t>(i);
  return ancestors_.weights[k] * psi_[k] / cumulative_.back();
}

Index AuxiliaryProposal::draw_index(Rng& rng) const {
  const double u = rng.uniform() * cumulative_.back();
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  if (it == cumulative_.end()) {
    --it;
  }
  auto index = static_cast<Index>(it - cumulative_.begin());
  // Skip zero-mass entries that share a cumulative value with their successor.
  while (index > 0 && cumulative_[static_cast<std::size_t>(index)] ==
                          cumulative_[static_cast<std::size_t>(index - 1)]) {
    --index;
  }
  return index;
}

std::vector<ProposalDraw> propose(const ProposalKernel& kernel, const AuxiliaryProposal& aux, Index n,
                                  Rng& rng) {
  require(n >= 0, "draw count must be nonnegative");
  std::vector<ProposalDraw> draws(static_cast<std::size_t>(n));
  const StreamFamily streams(rng);
  for_each_block(n, kDrawBlock, [&](Index block, Index begin, Index end) {
    Rng local = streams.stream(static_cast<std::uint64_t>(block));
    for (Index i = begin; i < end; ++i) {
      auto& draw = draws[static_cast<std::size_t>(i)];
      draw.ancestor = aux.draw_index(local);
      draw.child = kernel.sample(aux.ancestors().particle(draw.ancestor), local, &draw.component);
    }
  });
  return draws;
}

double log_importance_weight(const ProposalKernel& kernel, const LogKernelFn& log_kernel,
                             const AuxiliaryProposal& aux, Index ancestor, const Vector& child) {
  const Vector x = aux.ancestors().particle(ancestor);
  const double log_l = log_kernel(x, child);
  if (log_l == kNegInf) {
    return kNegInf;
  }
  const double log_r = kernel.log_density(x, child);
  if (log_r == kNegInf || aux.adjustment(ancestor) <= 0.0) {
    throw Error(ErrorCode::kAbsoluteContinuityViolation,
                "proposal density vanishes where the target kernel is positive");
  }
  return log_l - aux.log_adjustment(ancestor) - log_r;
}

double importance_weight(const ProposalKernel& kernel, const LogKernelFn& log_kernel,
                         const AuxiliaryProposal& aux, Index ancestor, const Vector& child) {
  return std::exp(log_importance_weight(kernel, log_kernel, aux, ancestor, child));
}

}  // namespace amoe
