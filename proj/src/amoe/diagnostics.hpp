#pragma once

#include <optional>
#include <span>
#include <vector>

#include "amoe/experts.hpp"

namespace amoe {

double ess(std::span<const double> weights);
double relative_ess(std::span<const double> weights);  // ess / N
double negated_entropy(std::span<const double> weights);
double coefficient_of_variation(std::span<const double> weights);
// Share of particles whose normalized weight is below `threshold`.
double fraction_below(std::span<const double> weights, double threshold);

struct ProportionCurve {
  std::vector<double> particle_fraction;  // starts at 0
  std::vector<double> mass_fraction;      // starts at 0

  // Mass carried by the top `particle_share` of particles (linear interpolation).
  [[nodiscard]] double mass_at(double particle_share) const;
  // Smallest particle share carrying `mass_share` of the mass (linear interpolation).
  [[nodiscard]] double particles_for_mass(double mass_share) const;
};

ProportionCurve proportion_curve(std::span<const double> weights);

struct Histogram {
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<Index> count;
};

// Histogram of N * normalized weight over [0, max] with `bins` equal bins.
Histogram weight_histogram(std::span<const double> weights, Index bins);

struct KldEstimate {
  double value_up_to_constant = 0.0;
  Index reference_sample_size = 0;
  double standard_error = 0.0;
  double reference_ess = 0.0;
  bool unreliable = false;
  // Divergence with the additive constant resolved, when log L*(xi_i) is known.
  std::optional<double> absolute_value;
  std::optional<double> absolute_standard_error;
};

struct KldOptions {
  // log L*(xi_i) for every ancestor; enables the absolute value.
  const std::vector<double>* log_optimal_adjustment = nullptr;
  // Receives the importance weights of the reference draws.
  std::vector<double>* weights_out = nullptr;
};

// Self-normalized importance-sampling estimate of -E[log r(xi_I, X')] under
// the auxiliary target, with a delta-method standard error.
KldEstimate estimate_kld(const ProposalKernel& proposal, const AuxiliaryProposal& aux,
                         const LogKernelFn& log_kernel, Index reference_n, Rng& rng,
                         const KldOptions& options = {});

// KL divergence between the optimal ancestor law (omega_i L*_i) and the
// auxiliary ancestor law (omega_i psi_i); the index part of the absolute KLD.
double adjustment_divergence(const AuxiliaryProposal& aux, const std::vector<double>& log_optimal_adjustment);

}  // namespace amoe
