#include "amoe/adaptation.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <limits>
#include <memory>
#include <numbers>

#include "amoe/linalg.hpp"
#include "amoe/parallel.hpp"
#include "amoe/warnings.hpp"

namespace amoe {
namespace {

constexpr double kRidge = 1e-8;
constexpr double kMaxGatingStep = 10.0;

Index gating_dim(Index components, Index ancestor_dim) { return (components - 1) * (ancestor_dim + 1); }

void check_compatible(const SuffStats& a, const SuffStats& b) {
  require(a.s.size() == b.s.size() && a.p.size() == b.p.size() && a.t.has_value() == b.t.has_value(),
          "sufficient statistics have different shapes");
}

LogisticGating newton_update(const LogisticGating& previous, const Matrix& t, const Matrix& v) {
  const Index rows = t.rows();
  const Index cols = t.cols();
  Vector gradient(rows * cols);
  for (Index j = 0; j < rows; ++j) {
    for (Index m = 0; m < cols; ++m) {
      gradient(j * cols + m) = t(j, m);
    }
  }
  // The Hessian estimate should be negative definite; factor its negation.
  Matrix neg = -symmetrize(v);
  neg.diagonal().array() += kRidge;
  Eigen::LLT<Matrix> llt(neg);
  Vector step;
  if (llt.info() == Eigen::Success && (llt.matrixL().toDenseMatrix().diagonal().array() > 0.0).all()) {
    step = llt.solve(gradient);
  } else {
    note_warning(Warning::kNewtonFallback);
    step = gradient;
  }
  if (!step.allFinite()) {
    note_warning(Warning::kNewtonFallback);
    step = gradient;
  }
  const double norm = step.norm();
  if (norm > kMaxGatingStep) {
    step *= kMaxGatingStep / norm;
  }
  LogisticGating out = previous;
  for (Index j = 0; j < rows; ++j) {
    for (Index m = 0; m < cols; ++m) {
      out.beta(j, m) += step(j * cols + m);
    }
  }
  return out;
}

StatisticsBatch run_blocks(const MixtureKernel& theta, const std::vector<WeightedPair>& pairs,
                           bool literal_hessian) {
  const auto& params = theta.params();
  const Index d = params.components();
  const Index p = params.ancestor_dim();
  const Index pc = params.child_dim();
  const bool logistic = params.logistic();
  const auto n = static_cast<Index>(pairs.size());
  const Index blocks = (n + kDrawBlock - 1) / kDrawBlock;

  struct Partial {
    SuffStats stats;
    double weight_sum = 0.0;
    Index underflows = 0;
  };
  std::vector<Partial> partials(static_cast<std::size_t>(blocks));

  for_each_block(n, kDrawBlock, [&](Index block, Index begin, Index end) {
    Partial local{SuffStats::zeros(d, p, pc, logistic)};
    MixtureKernel::Evaluation eval;
    Matrix outer(p + 1, p + 1);
    for (Index i = begin; i < end; ++i) {
      const auto& pair = pairs[static_cast<std::size_t>(i)];
      const double w = pair.weight;
      local.weight_sum += w;
      if (w == 0.0) {
        continue;
      }
      theta.evaluate(pair.ext_ancestor, pair.child, eval);
      if (eval.underflow) {
        ++local.underflows;
      }
      for (Index j = 0; j < d; ++j) {
        const double c = w * eval.responsibilities(j);
        local.stats.p(j) += c;
        if (c != 0.0) {
          add_suffstat(local.stats.s[static_cast<std::size_t>(j)], pair.ext_ancestor, pair.child,
                       c * eval.u_mean(j));
        }
      }
      if (logistic) {
        const Vector& alpha = eval.gating;
        const double last = alpha(d - 1);
        outer.noalias() = pair.ext_ancestor * pair.ext_ancestor.transpose();
        Matrix& t = *local.stats.t;
        Matrix& v = *local.stats.v;
        for (Index j = 0; j + 1 < d; ++j) {
          t.row(j).noalias() += w * (eval.responsibilities(j) - alpha(j)) * pair.ext_ancestor.transpose();
          for (Index k = 0; k + 1 < d; ++k) {
            double delta = 0.0;
            if (j == k) {
              delta = literal_hessian ? last : 1.0;
            }
            const double coef = w * alpha(j) * (alpha(k) - delta);
            v.block(j * (p + 1), k * (p + 1), p + 1, p + 1).noalias() += coef * outer;
          }
        }
      }
    }
    partials[static_cast<std::size_t>(block)] = std::move(local);
  });

  StatisticsBatch out;
  out.increment = SuffStats::zeros(d, p, pc, logistic);
  out.draws = n;
  for (const auto& part : partials) {
    out.increment += part.stats;
    out.weight_sum += part.weight_sum;
    out.underflows += part.underflows;
  }
  if (out.underflows > 0) {
    note_warning(Warning::kResponsibilityUnderflow, static_cast<std::uint64_t>(out.underflows));
  }
  return out;
}

}  // namespace

SuffStats SuffStats::zeros(Index components, Index ancestor_dim, Index child_dim, bool logistic) {
  SuffStats out;
  out.s.assign(static_cast<std::size_t>(components), ExpertSuffStat::zeros(ancestor_dim, child_dim));
  out.p = Vector::Zero(components);
  if (logistic) {
    const Index k = gating_dim(components, ancestor_dim);
    out.t = Matrix::Zero(components - 1, ancestor_dim + 1);
    out.v = Matrix::Zero(k, k);
  }
  return out;
}

SuffStats& SuffStats::operator+=(const SuffStats& other) {
  check_compatible(*this, other);
  for (std::size_t j = 0; j < s.size(); ++j) {
    s[j] += other.s[j];
  }
  p += other.p;
  if (t) {
    *t += *other.t;
    *v += *other.v;
  }
  return *this;
}

SuffStats& SuffStats::operator*=(double factor) {
  for (auto& block : s) {
    block *= factor;
  }
  p *= factor;
  if (t) {
    *t *= factor;
    *v *= factor;
  }
  return *this;
}

AdaptationConfig make_adaptation_config(Index iterations, Index n, Index n0, StepRule rule, double scale,
                                        double exponent) {
  AdaptationConfig config;
  config.iterations = iterations;
  for (Index l = 0; l < iterations; ++l) {
    config.sample_sizes.push_back(l == 0 ? n0 : n);
    if (rule == StepRule::kConstant) {
      config.step_sizes.push_back(scale / std::sqrt(static_cast<double>(iterations)));
    } else {
      config.step_sizes.push_back(std::pow(static_cast<double>(l + 1), -exponent));
    }
  }
  validate(config);
  return config;
}

void validate(const AdaptationConfig& config) {
  require(config.iterations >= 0, "iteration count must be nonnegative");
  require(static_cast<Index>(config.sample_sizes.size()) == config.iterations,
          "one sample size per iteration is required");
  require(static_cast<Index>(config.step_sizes.size()) == config.iterations,
          "one step size per iteration is required");
  for (Index n : config.sample_sizes) {
    require(n >= 1, "sample sizes must be positive");
  }
  for (double step : config.step_sizes) {
    require(step > 0.0 && step <= 1.0, "step sizes must lie in (0, 1]");
  }
  require(config.min_responsibility_mass >= 0.0 && config.min_responsibility_mass < 1.0,
          "min_responsibility_mass must lie in [0, 1)");
}

StatisticsBatch accumulate_weighted_pairs(const MixtureKernel& theta, const std::vector<WeightedPair>& pairs,
                                          bool literal_hessian) {
  return run_blocks(theta, pairs, literal_hessian);
}

StatisticsBatch accumulate_is_statistics(const MixtureKernel& theta, const AuxiliaryProposal& aux,
                                         const LogKernelFn& log_kernel, Index n, Rng& rng,
                                         const ProposalKernel* sampler, bool literal_hessian) {
  require(n >= 1, "at least one draw is required");
  const ProposalKernel& source = sampler != nullptr ? *sampler : theta;
  const auto draws = propose(source, aux, n, rng);
  std::vector<WeightedPair> pairs(draws.size());
  for_each_block(n, kDrawBlock, [&](Index, Index begin, Index end) {
    for (Index i = begin; i < end; ++i) {
      const auto k = static_cast<std::size_t>(i);
      const auto& draw = draws[k];
      pairs[k].ext_ancestor = aux.extended(draw.ancestor);
      pairs[k].child = draw.child;
      pairs[k].weight = std::exp(log_importance_weight(source, log_kernel, aux, draw.ancestor, draw.child));
    }
  });
  auto batch = run_blocks(theta, pairs, literal_hessian);
  batch.weights.reserve(pairs.size());
  for (const auto& pair : pairs) {
    batch.weights.push_back(pair.weight);
  }
  return batch;
}

SuffStats robbins_monro_update(const SuffStats& state, const SuffStats& increment, double weight_sum, Index n,
                               double step) {
  require(n >= 1, "batch size must be positive");
  require(step > 0.0 && step <= 1.0, "step size must lie in (0, 1]");
  const double lambda = state.initialized() ? step : 1.0;
  const double c_prev = state.initialized() ? state.c : 0.0;
  const double c = (1.0 - lambda) * c_prev + lambda * weight_sum / static_cast<double>(n);
  if (!(c > 0.0) || !std::isfinite(c)) {
    throw Error(ErrorCode::kDegenerateNormalizer, "normalizing-constant iterate is not positive");
  }
  SuffStats scaled = increment;
  scaled *= lambda / (c * static_cast<double>(n));
  SuffStats out;
  if (state.initialized()) {
    check_compatible(state, increment);
    out = state;
    out *= 1.0 - lambda;
    out += scaled;
  } else {
    out = std::move(scaled);
  }
  out.c = c;
  return out;
}

MixtureParams m_step(const SuffStats& stats, const MixtureParams& previous, const AdaptationConfig& config) {
  const Index d = previous.components();
  require(stats.components() == d, "statistics and parameters have different component counts");
  require(stats.t.has_value() == previous.logistic(), "statistics do not match the gating mode");
  const double total = stats.p.sum();
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw Error(ErrorCode::kDegenerateNormalizer, "responsibility masses sum to zero");
  }
  const Index pc = previous.child_dim();

  std::vector<bool> dead(static_cast<std::size_t>(d));
  std::vector<Matrix> scatter(static_cast<std::size_t>(d));
  MixtureParams out = previous;
  out.pooled = config.pooled;
  Matrix live_scatter = Matrix::Zero(pc, pc);
  double live_mass = 0.0;
  bool any_dead = false;
  for (Index j = 0; j < d; ++j) {
    const auto k = static_cast<std::size_t>(j);
    const double mass = stats.p(j);
    dead[k] = !(mass > config.min_responsibility_mass * total) || mass <= 0.0;
    if (dead[k]) {
      any_dead = true;
      note_warning(Warning::kComponentReset);
      continue;
    }
    const auto& sj = stats.s[k];
    out.experts[k].lambda = right_solve_psd(sj.s3, sj.s2);
    scatter[k] = symmetrize(sj.s1 - out.experts[k].lambda * sj.s3.transpose());
    live_scatter += scatter[k];
    live_mass += mass;
  }
  const Matrix average = live_scatter / live_mass;
  if (config.pooled) {
    const Matrix pooled = config.literal_pooling ? Matrix(live_scatter / static_cast<double>(d)) : average;
    const Matrix sigma = SpdFactor(pooled).matrix();
    for (auto& expert : out.experts) {
      expert.sigma = sigma;
    }
  } else {
    // Live-average covariance for reset components; when even that collapses,
    // reset components keep their previous covariance.
    std::optional<Matrix> fallback;
    try {
      fallback = SpdFactor(average).matrix();
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kCholeskyFailure) {
        throw;
      }
    }
    for (Index j = 0; j < d; ++j) {
      const auto k = static_cast<std::size_t>(j);
      if (!dead[k]) {
        try {
          out.experts[k].sigma = SpdFactor(scatter[k] / stats.p(j)).matrix();
          continue;
        } catch (const Error& e) {
          if (e.code() != ErrorCode::kCholeskyFailure) {
            throw;
          }
          // A component collapsed onto a few particles: reset it like a dead one.
          dead[k] = true;
          any_dead = true;
          note_warning(Warning::kComponentReset);
        }
      }
      out.experts[k].sigma = fallback ? *fallback : previous.experts[k].sigma;
    }
  }

  if (!config.freeze_gating && !any_dead) {
    if (previous.logistic()) {
      out.gating = newton_update(std::get<LogisticGating>(previous.gating), *stats.t, *stats.v);
    } else {
      Vector weights = stats.p / total;
      weights /= weights.sum();
      out.gating = ConstantGating{weights};
    }
  }
  return out;
}

MixtureParams fit_mixture(const MixtureParams& initial, const std::vector<WeightedPair>& pairs, Index iterations,
                          const AdaptationConfig& config) {
  require(iterations >= 0, "iteration count must be nonnegative");
  MixtureParams theta = initial;
  for (Index k = 0; k < iterations; ++k) {
    const MixtureKernel kernel(theta);
    const StatisticsBatch batch = run_blocks(kernel, pairs, config.literal_hessian);
    const SuffStats stats = robbins_monro_update({}, batch.increment, batch.weight_sum, batch.draws, 1.0);
    theta = m_step(stats, theta, config);
  }
  return theta;
}

void recenter_gating_gradient(SuffStats& stats, const MixtureParams& before, const MixtureParams& after) {
  if (!stats.t || !before.logistic() || !after.logistic()) {
    return;
  }
  const Matrix delta = std::get<LogisticGating>(after.gating).beta - std::get<LogisticGating>(before.gating).beta;
  const Index rows = delta.rows();
  const Index cols = delta.cols();
  Vector flat(rows * cols);
  for (Index j = 0; j < rows; ++j) {
    flat.segment(j * cols, cols) = delta.row(j).transpose();
  }
  const Vector shift = symmetrize(*stats.v) * flat;
  for (Index j = 0; j < rows; ++j) {
    stats.t->row(j) += shift.segment(j * cols, cols).transpose();
  }
}

double expected_complete_loglik(const SuffStats& stats, const MixtureParams& theta) {
  require(!theta.logistic(), "the complete-data objective is defined here for constant gating");
  const auto& beta = std::get<ConstantGating>(theta.gating).weights;
  double out = 0.0;
  for (Index j = 0; j < theta.components(); ++j) {
    const auto k = static_cast<std::size_t>(j);
    const auto& expert = theta.experts[k];
    const auto& sj = stats.s[k];
    const SpdFactor factor(expert.sigma);
    const Matrix precision = factor.inverse();
    const double a = 0.5 * factor.log_det();
    const double b1 = -0.5 * (precision * sj.s1).trace();
    const double b2 = -0.5 * (expert.lambda.transpose() * precision * expert.lambda * sj.s2).trace();
    const double b3 = (expert.lambda.transpose() * precision * sj.s3).trace();
    const double mass = stats.p(j);
    const double gating = mass > 0.0 ? mass * std::log(beta(j)) : 0.0;
    out += gating - mass * a + b1 + b2 + b3;
  }
  return out;
}

namespace {

using BatchSource = std::function<StatisticsBatch(Index iteration, const MixtureKernel& theta,
                                                  IterationRecord& record, MixtureParams& replacement)>;

AdaptationResult run_adaptation(const MixtureParams& initial, const AdaptationConfig& config,
                                const BatchSource& source, const DiagnosticsFn& diagnostics) {
  validate(config);
  AdaptationResult result;
  result.theta = initial;
  SuffStats state;
  try {
    for (Index l = 0; l < config.iterations; ++l) {
      IterationRecord record;
      record.iteration = l;
      MixtureParams replacement;
      auto kernel = std::make_unique<MixtureKernel>(result.theta);
      StatisticsBatch batch = source(l, *kernel, record, replacement);
      if (!replacement.experts.empty()) {
        result.theta = std::move(replacement);
      }
      record.theta = result.theta;
      result.trace.iterations.push_back(std::move(record));
      state = robbins_monro_update(state, batch.increment, batch.weight_sum, batch.draws,
                                   config.step_sizes[static_cast<std::size_t>(l)]);
      MixtureParams next = m_step(state, result.theta, config);
      if (!config.literal_gating) {
        recenter_gating_gradient(state, result.theta, next);
      }
      result.theta = std::move(next);
    }
    IterationRecord last;
    last.iteration = config.iterations;
    last.theta = result.theta;
    last.proposal = "theta";
    if (diagnostics) {
      const MixtureKernel kernel(result.theta);
      diagnostics(kernel, last);
    }
    result.trace.iterations.push_back(std::move(last));
  } catch (const Error& error) {
    throw AdaptationError(error, std::move(result.trace));
  }
  return result;
}

}  // namespace

AdaptationResult adapt(const MixtureParams& initial, const AuxiliaryProposal& aux, const LogKernelFn& log_kernel,
                       const AdaptationConfig& config, Rng& rng, const AdaptOptions& options) {
  validate(initial);
  const bool logistic = initial.logistic();
  auto source = [&](Index l, const MixtureKernel& theta, IterationRecord& record,
                    MixtureParams& replacement) -> StatisticsBatch {
    const Index n = config.sample_sizes[static_cast<std::size_t>(l)];
    const bool use_pilot = l == 0 && options.pilot != nullptr;
    const ProposalKernel& sampler = use_pilot ? *options.pilot : static_cast<const ProposalKernel&>(theta);
    record.proposal = use_pilot ? "pilot" : "theta";
    if (options.diagnostics) {
      options.diagnostics(sampler, record);
    }
    const auto draws = propose(sampler, aux, n, rng);
    std::vector<double> weights(draws.size());
    for_each_block(n, kDrawBlock, [&](Index, Index begin, Index end) {
      for (Index i = begin; i < end; ++i) {
        const auto& draw = draws[static_cast<std::size_t>(i)];
        weights[static_cast<std::size_t>(i)] =
            std::exp(log_importance_weight(sampler, log_kernel, aux, draw.ancestor, draw.child));
      }
    });
    std::unique_ptr<MixtureKernel> initialized;
    const MixtureKernel* responsibilities = &theta;
    if (l == 0 && options.initializer) {
      replacement = options.initializer(draws, weights);
      require(replacement.logistic() == logistic, "initializer changed the gating mode");
      initialized = std::make_unique<MixtureKernel>(replacement);
      responsibilities = initialized.get();
    }
    std::vector<WeightedPair> pairs(draws.size());
    for (std::size_t k = 0; k < draws.size(); ++k) {
      pairs[k] = {aux.extended(draws[k].ancestor), draws[k].child, weights[k]};
    }
    StatisticsBatch batch = run_blocks(*responsibilities, pairs, config.literal_hessian);
    record.weight_sum = batch.weight_sum;
    record.draws = n;
    record.ess = batch.weight_sum > 0.0 ? ess(weights) : 0.0;
    if (options.keep_weights) {
      record.weights = weights;
    }
    return batch;
  };
  return run_adaptation(initial, config, source, options.diagnostics);
}

AdaptationResult adapt_exact(const MixtureParams& initial, const ExpectationFn& expectation,
                             const AdaptationConfig& config) {
  validate(initial);
  auto source = [&](Index, const MixtureKernel& theta, IterationRecord& record, MixtureParams&) {
    StatisticsBatch batch = expectation(theta);
    record.proposal = "theta";
    record.weight_sum = batch.weight_sum;
    record.draws = batch.draws;
    return batch;
  };
  return run_adaptation(initial, config, source, {});
}

double mean_field_residual(const SuffStats& stats, const MixtureParams& shape, const ExpectationFn& expectation,
                           const AdaptationConfig& config) {
  const MixtureParams theta_bar = m_step(stats, shape, config);
  const MixtureKernel kernel(theta_bar);
  StatisticsBatch batch = expectation(kernel);
  require(batch.weight_sum > 0.0, "expectation oracle returned zero mass");
  SuffStats mean = batch.increment;
  mean *= 1.0 / batch.weight_sum;
  double out = (mean.p - stats.p).cwiseAbs().maxCoeff();
  for (std::size_t j = 0; j < stats.s.size(); ++j) {
    out = std::max(out, (mean.s[j].s1 - stats.s[j].s1).cwiseAbs().maxCoeff());
    out = std::max(out, (mean.s[j].s2 - stats.s[j].s2).cwiseAbs().maxCoeff());
    out = std::max(out, (mean.s[j].s3 - stats.s[j].s3).cwiseAbs().maxCoeff());
  }
  return out;
}

MixtureParams initial_mixture(const std::vector<Vector>& children, const std::vector<double>& weights,
                              Index components, Index ancestor_dim, const StratumFamily& family, bool logistic,
                              bool pooled) {
  require(!children.empty() && children.size() == weights.size(), "need weighted children");
  require(components >= 1 && ancestor_dim >= 1, "invalid mixture shape");
  const Index pc = children.front().size();
  double total = 0.0;
  Vector mean = Vector::Zero(pc);
  for (std::size_t k = 0; k < children.size(); ++k) {
    total += weights[k];
    mean += weights[k] * children[k];
  }
  Matrix cov = Matrix::Zero(pc, pc);
  if (total > 0.0) {
    mean /= total;
    for (std::size_t k = 0; k < children.size(); ++k) {
      const Vector r = children[k] - mean;
      cov.noalias() += (weights[k] / total) * r * r.transpose();
    }
  } else {
    mean.setZero();
  }
  if (!(cov.trace() > 1e-12)) {
    cov = Matrix::Identity(pc, pc);
  }
  cov = symmetrize(cov);
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  const Vector values = eig.eigenvalues().cwiseMax(0.0);
  const Matrix& vectors = eig.eigenvectors();

  MixtureParams theta;
  theta.family = family;
  theta.pooled = pooled;
  const Matrix sigma = SpdFactor(cov).matrix();
  for (Index j = 0; j < components; ++j) {
    Vector intercept = mean;
    if (components > 1) {
      if (pc >= 2) {
        const double angle = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(components);
        intercept += std::cos(angle) * std::sqrt(values(pc - 1)) * vectors.col(pc - 1) +
                     std::sin(angle) * std::sqrt(values(pc - 2)) * vectors.col(pc - 2);
      } else {
        const double offset = -1.0 + 2.0 * static_cast<double>(j) / static_cast<double>(components - 1);
        intercept(0) += offset * std::sqrt(values(0));
      }
    }
    ExpertParams expert{Matrix::Zero(pc, ancestor_dim + 1), sigma};
    expert.lambda.col(ancestor_dim) = intercept;
    theta.experts.push_back(std::move(expert));
  }
  if (logistic) {
    theta.gating = LogisticGating{Matrix::Zero(components - 1, ancestor_dim + 1)};
  } else {
    theta.gating = ConstantGating{Vector::Constant(components, 1.0 / static_cast<double>(components))};
  }
  return theta;
}

}  // namespace amoe
