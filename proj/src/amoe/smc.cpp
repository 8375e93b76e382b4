#include "amoe/smc.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <limits>
#include <memory>

#include "amoe/diagnostics.hpp"
#include "amoe/errors.hpp"
#include "amoe/parallel.hpp"
#include "amoe/warnings.hpp"

namespace amoe {
namespace {

std::vector<double> adjustment_values(const WeightedSample& sample, const StateSpaceModel& model, const Vector& y,
                                      AdjustmentMode mode) {
  std::vector<double> psi(static_cast<std::size_t>(sample.size()), 1.0);
  if (mode == AdjustmentMode::kUniform) {
    return psi;
  }
  const auto logs = optimal_log_adjustments(model, sample.particles, y);
  const double peak = *std::max_element(logs.begin(), logs.end());
  if (!std::isfinite(peak)) {
    throw Error(ErrorCode::kDegenerateAncestors, "optimal adjustment vanishes on every ancestor");
  }
  for (std::size_t i = 0; i < psi.size(); ++i) {
    psi[i] = std::exp(logs[i] - peak);
  }
  return psi;
}

AdaptationConfig budgeted(const AdaptedSettings& settings, Index n_particles) {
  AdaptationConfig config = settings.adaptation;
  const Index l = config.iterations;
  if (settings.budget_fraction > 0.0 && l > 0) {
    const auto per_iteration = std::max<Index>(
        1, static_cast<Index>(std::floor(settings.budget_fraction * static_cast<double>(n_particles) /
                                         static_cast<double>(l))));
    config.sample_sizes.assign(static_cast<std::size_t>(l), per_iteration);
  }
  return config;
}

}  // namespace

void validate(const FilterConfig& config) {
  require(config.n_particles >= 2, "a filter needs at least two particles");
  if (config.proposal == ProposalMode::kAdapted) {
    const auto& a = config.adapted;
    validate(a.adaptation);
    require(a.components >= 1, "adapted proposal needs at least one expert");
    require(a.stride >= 1, "adaptation stride must be positive");
    require(a.budget_fraction >= 0.0 && a.budget_fraction < 1.0, "budget fraction must lie in [0, 1)");
  }
}

StepOutput apf_step(const WeightedSample& sample, const StateSpaceModel& model, const Vector& y,
                    const FilterConfig& config, Rng& rng, const MixtureParams* warm, bool adapt_now) {
  validate(config);
  validate(sample);
  require(sample.dim() == model.state_dim(), "sample dimension does not match the model");
  const LogKernelFn log_kernel = filtering_kernel(model, y);
  const AuxiliaryProposal aux(sample, adjustment_values(sample, model, y, config.adjustment));

  StepOutput out;
  Index n_propagate = config.n_particles;
  std::unique_ptr<ProposalKernel> proposal;
  switch (config.proposal) {
    case ProposalMode::kPrior:
      proposal = std::make_unique<PriorProposal>(model);
      break;
    case ProposalMode::kOptimal:
      proposal = std::make_unique<OptimalProposal>(model, y);
      break;
    case ProposalMode::kAdapted: {
      const auto& settings = config.adapted;
      if (settings.budget_fraction > 0.0) {
        n_propagate = std::max<Index>(
            2, static_cast<Index>(std::ceil((1.0 - settings.budget_fraction) *
                                            static_cast<double>(config.n_particles))));
      }
      if (warm != nullptr && !adapt_now) {
        out.theta = *warm;
      } else {
        AdaptationConfig adaptation = budgeted(settings, config.n_particles);
        adaptation.pooled = settings.pooled;
        require(warm != nullptr || settings.initial || adaptation.iterations > 0,
                "adapted proposal needs iterations or an initial mixture");
        const PriorProposal prior(model);
        AdaptOptions pilot_options;
        pilot_options.pilot = &prior;
        pilot_options.initializer = [&](const std::vector<ProposalDraw>& draws, const std::vector<double>& weights) {
          std::vector<Vector> children;
          children.reserve(draws.size());
          for (const auto& draw : draws) {
            children.push_back(draw.child);
          }
          return initial_mixture(children, weights, settings.components, model.state_dim(), settings.family,
                                 settings.logistic, settings.pooled);
        };
        // Placeholder with the right gating mode; replaced after the pilot batch.
        const auto cold_start = [&] {
          const MixtureParams placeholder =
              initial_mixture({Vector::Zero(model.state_dim())}, {1.0}, settings.components, model.state_dim(),
                              settings.family, settings.logistic, settings.pooled);
          return adapt(placeholder, aux, log_kernel, adaptation, rng, pilot_options);
        };
        const MixtureParams* start = warm != nullptr ? warm : (settings.initial ? &*settings.initial : nullptr);
        AdaptationResult result;
        if (start == nullptr) {
          result = cold_start();
        } else {
          try {
            // The first batch still comes from the prior kernel: a carried-over
            // mixture can be far narrower than the new target.
            AdaptOptions warm_options;
            warm_options.pilot = &prior;
            result = adapt(*start, aux, log_kernel, adaptation, rng, warm_options);
          } catch (const Error& e) {
            // The carried-over mixture can miss the new target entirely.
            if (warm == nullptr || (e.code() != ErrorCode::kDegenerateNormalizer &&
                                    e.code() != ErrorCode::kCholeskyFailure)) {
              throw;
            }
            note_warning(Warning::kWarmStartReset);
            result = cold_start();
          }
        }
        out.theta = std::move(result.theta);
        out.trace = std::move(result.trace);
      }
      proposal = std::make_unique<MixtureKernel>(*out.theta);
      break;
    }
  }

  const auto draws = propose(*proposal, aux, n_propagate, rng);
  out.sample.particles.resize(model.state_dim(), n_propagate);
  out.sample.weights.resize(static_cast<std::size_t>(n_propagate));
  std::vector<Index> ancestors(static_cast<std::size_t>(n_propagate));
  for_each_block(n_propagate, kDrawBlock, [&](Index, Index begin, Index end) {
    for (Index i = begin; i < end; ++i) {
      const auto k = static_cast<std::size_t>(i);
      out.sample.particles.col(i) = draws[k].child;
      ancestors[k] = draws[k].ancestor;
      out.sample.weights[k] =
          std::exp(log_importance_weight(*proposal, log_kernel, aux, draws[k].ancestor, draws[k].child));
    }
  });
  out.sample.ancestors = std::move(ancestors);
  double total = 0.0;
  for (double w : out.sample.weights) {
    total += w;
  }
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw Error(ErrorCode::kFilterCollapse, "all importance weights vanished");
  }
  return out;
}

WeightedSample normalize_weights(WeightedSample sample) {
  double total = 0.0;
  for (double w : sample.weights) {
    require(std::isfinite(w) && w >= 0.0, "weights must be finite and nonnegative");
    total += w;
  }
  if (!(total > 0.0)) {
    throw Error(ErrorCode::kFilterCollapse, "cannot normalize all-zero weights");
  }
  std::size_t last = 0;
  double partial = 0.0;
  for (std::size_t i = 0; i < sample.weights.size(); ++i) {
    sample.weights[i] /= total;
    if (sample.weights[i] > 0.0) {
      last = i;
    }
  }
  for (std::size_t i = 0; i < sample.weights.size(); ++i) {
    if (i != last) {
      partial += sample.weights[i];
    }
  }
  sample.weights[last] = std::max(0.0, 1.0 - partial);
  return sample;
}

Vector weighted_mean(const WeightedSample& sample) {
  Vector mean = Vector::Zero(sample.dim());
  double total = 0.0;
  for (Index i = 0; i < sample.size(); ++i) {
    const double w = sample.weights[static_cast<std::size_t>(i)];
    mean += w * sample.particles.col(i);
    total += w;
  }
  return mean / total;
}

namespace {

StepRecord describe(Index step, const WeightedSample& sample, double cpu_ms) {
  StepRecord record;
  record.step = step;
  record.ess = ess(sample.weights);
  record.relative_ess = record.ess / static_cast<double>(sample.size());
  record.negated_entropy = negated_entropy(sample.weights);
  record.cpu_ms = cpu_ms;
  record.estimate = weighted_mean(sample);
  return record;
}

}  // namespace

FilterTrace run_filter(const StateSpaceModel& model, const std::vector<Vector>& observations,
                       const FilterConfig& config, Rng& rng) {
  validate(config);
  for (const auto& y : observations) {
    model.check_observation(y);
  }
  const Index n = config.n_particles;
  Matrix particles(model.state_dim(), n);
  const StreamFamily streams(rng);
  for_each_block(n, kDrawBlock, [&](Index block, Index begin, Index end) {
    Rng local = streams.stream(static_cast<std::uint64_t>(block));
    for (Index i = begin; i < end; ++i) {
      particles.col(i) = model.sample_initial(local);
    }
  });
  WeightedSample sample = uniform_sample(std::move(particles));

  FilterTrace trace;
  trace.steps.push_back(describe(0, sample, 0.0));
  std::optional<MixtureParams> theta;
  const bool warm_start = config.adapted.warm_start;
  for (std::size_t k = 0; k < observations.size(); ++k) {
    const std::clock_t start = std::clock();
    try {
      const bool adapt_now = static_cast<Index>(k) % config.adapted.stride == 0;
      const MixtureParams* warm = (warm_start || !adapt_now) && theta ? &*theta : nullptr;
      StepOutput step = apf_step(sample, model, observations[k], config, rng, warm, adapt_now);
      sample = std::move(step.sample);
      if (step.theta) {
        theta = std::move(step.theta);
      }
    } catch (const Error& error) {
      if (error.code() != ErrorCode::kFilterCollapse) {
        throw;
      }
      trace.collapsed = true;
      trace.error = error.what();
      break;
    }
    const double cpu_ms = 1000.0 * static_cast<double>(std::clock() - start) / CLOCKS_PER_SEC;
    trace.steps.push_back(describe(static_cast<Index>(k) + 1, sample, cpu_ms));
  }
  return trace;
}

Simulation simulate(const StateSpaceModel& model, Index steps, Rng& rng) {
  require(steps >= 0, "step count must be nonnegative");
  Simulation out;
  Vector x = model.sample_initial(rng);
  out.states.push_back(x);
  for (Index k = 0; k < steps; ++k) {
    x = model.sample_prior(x, rng);
    out.states.push_back(x);
    out.observations.push_back(model.sample_observation(x, rng));
  }
  return out;
}

}  // namespace amoe
