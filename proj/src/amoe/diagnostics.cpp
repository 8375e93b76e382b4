#include "amoe/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "amoe/errors.hpp"
#include "amoe/parallel.hpp"
#include "amoe/warnings.hpp"

namespace amoe {
namespace {

double checked_total(std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) {
    require(std::isfinite(w) && w >= 0.0, "weights must be finite and nonnegative");
    total += w;
  }
  require(total > 0.0, "at least one weight must be positive");
  return total;
}

double interpolate(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
  if (x <= xs.front()) {
    return ys.front();
  }
  if (x >= xs.back()) {
    return ys.back();
  }
  const auto it = std::upper_bound(xs.begin(), xs.end(), x);
  const auto k = static_cast<std::size_t>(it - xs.begin());
  const double x0 = xs[k - 1];
  const double x1 = xs[k];
  if (x1 == x0) {
    return ys[k];
  }
  return ys[k - 1] + (ys[k] - ys[k - 1]) * (x - x0) / (x1 - x0);
}

}  // namespace

double ess(std::span<const double> weights) {
  const double total = checked_total(weights);
  // Rescale first so that tiny or huge weights do not under/overflow the squares.
  double sq = 0.0;
  for (double w : weights) {
    const double v = w / total;
    sq += v * v;
  }
  return 1.0 / sq;
}

double relative_ess(std::span<const double> weights) {
  return ess(weights) / static_cast<double>(weights.size());
}

double negated_entropy(std::span<const double> weights) {
  const double total = checked_total(weights);
  double out = 0.0;
  for (double w : weights) {
    const double v = w / total;
    if (v > 0.0) {  // also skips weights that underflow after normalization
      out += v * std::log(v);
    }
  }
  return std::min(out, 0.0);
}

double coefficient_of_variation(std::span<const double> weights) {
  const double total = checked_total(weights);
  const auto n = static_cast<double>(weights.size());
  const double mean = 1.0 / n;
  double var = 0.0;
  for (double w : weights) {
    const double d = w / total - mean;
    var += d * d;
  }
  return std::sqrt(var / n) / mean;
}

double fraction_below(std::span<const double> weights, double threshold) {
  const double total = checked_total(weights);
  std::size_t count = 0;
  for (double w : weights) {
    if (w / total < threshold) {
      ++count;
    }
  }
  return static_cast<double>(count) / static_cast<double>(weights.size());
}

double ProportionCurve::mass_at(double particle_share) const {
  return interpolate(particle_fraction, mass_fraction, particle_share);
}

double ProportionCurve::particles_for_mass(double mass_share) const {
  // Invert on the strictly increasing part of the curve.
  std::vector<double> xs{0.0};
  std::vector<double> ys{0.0};
  for (std::size_t k = 1; k < mass_fraction.size(); ++k) {
    if (mass_fraction[k] > xs.back()) {
      xs.push_back(mass_fraction[k]);
      ys.push_back(particle_fraction[k]);
    }
  }
  return interpolate(xs, ys, mass_share);
}

ProportionCurve proportion_curve(std::span<const double> weights) {
  const double total = checked_total(weights);
  std::vector<double> sorted(weights.begin(), weights.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const auto n = sorted.size();
  ProportionCurve curve;
  curve.particle_fraction.reserve(n + 1);
  curve.mass_fraction.reserve(n + 1);
  curve.particle_fraction.push_back(0.0);
  curve.mass_fraction.push_back(0.0);
  double cum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    cum += sorted[k];
    curve.particle_fraction.push_back(static_cast<double>(k + 1) / static_cast<double>(n));
    curve.mass_fraction.push_back(std::min(1.0, cum / total));
  }
  curve.mass_fraction.back() = 1.0;
  return curve;
}

Histogram weight_histogram(std::span<const double> weights, Index bins) {
  require(bins >= 1, "histogram needs at least one bin");
  const double total = checked_total(weights);
  const auto n = static_cast<double>(weights.size());
  double top = 0.0;
  for (double w : weights) {
    top = std::max(top, n * w / total);
  }
  Histogram h;
  const double width = top / static_cast<double>(bins);
  for (Index b = 0; b < bins; ++b) {
    h.lower.push_back(width * static_cast<double>(b));
    h.upper.push_back(width * static_cast<double>(b + 1));
  }
  h.count.assign(static_cast<std::size_t>(bins), 0);
  for (double w : weights) {
    const double v = n * w / total;
    auto b = width > 0.0 ? static_cast<Index>(v / width) : 0;
    b = std::clamp<Index>(b, 0, bins - 1);
    ++h.count[static_cast<std::size_t>(b)];
  }
  return h;
}

double adjustment_divergence(const AuxiliaryProposal& aux, const std::vector<double>& log_optimal_adjustment) {
  const Index n = aux.size();
  require(static_cast<Index>(log_optimal_adjustment.size()) == n, "one optimal adjustment per ancestor");
  const auto& omega = aux.ancestors().weights;
  std::vector<double> log_star(static_cast<std::size_t>(n));
  std::vector<double> log_aux(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const double lo = std::log(omega[k]);
    log_star[k] = lo + log_optimal_adjustment[k];
    log_aux[k] = lo + aux.log_adjustment(i);
  }
  const double z_star = log_sum_exp(log_star);
  const double z_aux = log_sum_exp(log_aux);
  double out = 0.0;
  for (std::size_t k = 0; k < log_star.size(); ++k) {
    const double a = log_star[k] - z_star;
    if (std::isfinite(a)) {
      out += std::exp(a) * (a - (log_aux[k] - z_aux));
    }
  }
  return out;
}

KldEstimate estimate_kld(const ProposalKernel& proposal, const AuxiliaryProposal& aux,
                         const LogKernelFn& log_kernel, Index reference_n, Rng& rng,
                         const KldOptions& options) {
  require(reference_n >= 1000, "reference sample size must be at least 1000");
  const bool pinned = options.log_optimal_adjustment != nullptr;
  if (pinned) {
    require(static_cast<Index>(options.log_optimal_adjustment->size()) == aux.size(),
            "one optimal adjustment per ancestor");
  }
  const auto draws = propose(proposal, aux, reference_n, rng);
  const auto n = static_cast<std::size_t>(reference_n);
  std::vector<double> log_w(n);
  std::vector<double> f(n, 0.0);
  std::vector<double> g(n, 0.0);
  for_each_block(reference_n, kDrawBlock, [&](Index, Index begin, Index end) {
    for (Index i = begin; i < end; ++i) {
      const auto k = static_cast<std::size_t>(i);
      const auto& draw = draws[k];
      const Vector x = aux.ancestors().particle(draw.ancestor);
      const double log_l = log_kernel(x, draw.child);
      if (log_l == -std::numeric_limits<double>::infinity()) {
        log_w[k] = log_l;
        continue;
      }
      const double log_r = proposal.log_density(x, draw.child);
      if (!std::isfinite(log_r)) {
        throw Error(ErrorCode::kAbsoluteContinuityViolation,
                    "proposal density vanishes where the target kernel is positive");
      }
      log_w[k] = log_l - aux.log_adjustment(draw.ancestor) - log_r;
      f[k] = -log_r;
      if (pinned) {
        g[k] = log_l - (*options.log_optimal_adjustment)[static_cast<std::size_t>(draw.ancestor)] - log_r;
      }
    }
  });
  const double peak = *std::max_element(log_w.begin(), log_w.end());
  if (!std::isfinite(peak)) {
    throw Error(ErrorCode::kDegenerateNormalizer, "all reference importance weights are zero");
  }
  std::vector<double> w(n);
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    w[k] = std::exp(log_w[k] - peak);
    total += w[k];
  }
  auto self_normalized = [&](const std::vector<double>& values, double& se) {
    double mean = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      if (w[k] > 0.0) {
        mean += w[k] * values[k];
      }
    }
    mean /= total;
    double var = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      if (w[k] > 0.0) {
        const double d = w[k] / total * (values[k] - mean);
        var += d * d;
      }
    }
    se = std::sqrt(var);
    return mean;
  };
  KldEstimate out;
  out.reference_sample_size = reference_n;
  out.value_up_to_constant = self_normalized(f, out.standard_error);
  out.reference_ess = ess(w);
  if (out.reference_ess < 10.0) {
    out.unreliable = true;
    note_warning(Warning::kUnreliableKld);
  }
  if (pinned) {
    double se = 0.0;
    const double first = self_normalized(g, se);
    out.absolute_value = first + adjustment_divergence(aux, *options.log_optimal_adjustment);
    out.absolute_standard_error = se;
  }
  if (options.weights_out != nullptr) {
    for (std::size_t k = 0; k < n; ++k) {
      if (w[k] > 0.0) {
        w[k] = std::exp(log_w[k]);
      }
    }
    *options.weights_out = std::move(w);
  }
  return out;
}

}  // namespace amoe
