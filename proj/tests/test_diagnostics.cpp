#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "amoe/diagnostics.hpp"
#include "amoe/errors.hpp"
#include "amoe/models.hpp"
#include "selftest/oracles.hpp"

namespace {

using amoe::Matrix;
using amoe::Vector;

TEST(Diagnostics, EssAndEntropyOfUniformWeights) {
  const std::vector<double> w(64, 3.0);
  EXPECT_NEAR(amoe::ess(w), 64.0, 1e-12);
  EXPECT_NEAR(amoe::relative_ess(w), 1.0, 1e-14);
  EXPECT_NEAR(amoe::negated_entropy(w), -std::log(64.0), 1e-12);
  EXPECT_NEAR(amoe::coefficient_of_variation(w), 0.0, 1e-14);
}

TEST(Diagnostics, WeightSummariesMatchHandComputation) {
  const std::vector<double> w{1.0, 1.0, 2.0, 4.0};
  const double s = 8.0;
  double sq = 0.0;
  double ent = 0.0;
  double var = 0.0;
  for (double x : w) {
    sq += (x / s) * (x / s);
    ent += (x / s) * std::log(x / s);
    var += (x / s - 0.25) * (x / s - 0.25);
  }
  EXPECT_NEAR(amoe::ess(w), 1.0 / sq, 1e-12);
  EXPECT_NEAR(amoe::negated_entropy(w), ent, 1e-12);
  EXPECT_NEAR(amoe::coefficient_of_variation(w), std::sqrt(var / 4.0) / 0.25, 1e-12);
  EXPECT_DOUBLE_EQ(amoe::fraction_below(w, 0.2), 0.5);
}

TEST(Diagnostics, ZerosAndUnderflowDoNotBreakTheEntropy) {
  const std::vector<double> w{0.0, 1e-320, 1.0, 1.0};
  EXPECT_NEAR(amoe::negated_entropy(w), std::log(0.5), 1e-12);
  EXPECT_THROW((void)amoe::ess(std::vector<double>{0.0, 0.0}), amoe::Error);
}

TEST(Diagnostics, ProportionCurveOfASmallExample) {
  const std::vector<double> w{1.0, 1.0, 2.0, 4.0};
  const auto curve = amoe::proportion_curve(w);
  ASSERT_EQ(curve.particle_fraction.size(), 5u);
  const std::vector<double> mass{0.0, 0.5, 0.75, 0.875, 1.0};
  for (std::size_t k = 0; k < mass.size(); ++k) {
    EXPECT_NEAR(curve.mass_fraction[k], mass[k], 1e-15);
    EXPECT_NEAR(curve.particle_fraction[k], 0.25 * static_cast<double>(k), 1e-15);
  }
  EXPECT_NEAR(curve.mass_at(0.125), 0.25, 1e-15);
  EXPECT_NEAR(curve.particles_for_mass(0.75), 0.5, 1e-15);
  EXPECT_NEAR(curve.particles_for_mass(0.8125), 0.625, 1e-15);
}

TEST(Diagnostics, ProportionCurveIsConcaveAndMonotone) {
  amoe::Rng rng(6);
  std::vector<double> w;
  for (int i = 0; i < 1000; ++i) {
    w.push_back(std::exp(3.0 * rng.normal()));
  }
  const auto curve = amoe::proportion_curve(w);
  for (std::size_t k = 1; k + 1 < curve.mass_fraction.size(); ++k) {
    const double left = curve.mass_fraction[k] - curve.mass_fraction[k - 1];
    const double right = curve.mass_fraction[k + 1] - curve.mass_fraction[k];
    EXPECT_GE(left, 0.0);
    EXPECT_GE(left + 1e-15, right);
  }
}

TEST(Diagnostics, HistogramOfScaledWeights) {
  const std::vector<double> w{1.0, 1.0, 2.0, 4.0};  // N * normalized weight: 0.5, 0.5, 1, 2
  const auto h = amoe::weight_histogram(w, 4);
  EXPECT_DOUBLE_EQ(h.upper.back(), 2.0);
  EXPECT_EQ(h.count, (std::vector<amoe::Index>{0, 2, 1, 1}));
}

// With the optimal kernel and the optimal adjustment the weights are constant,
// so the pinned divergence reduces to the index part.
TEST(Diagnostics, OptimalProposalHasOnlyTheAdjustmentDivergence) {
  const amoe::LinearGaussianModel model;
  amoe::Rng rng(1);
  const auto ancestors = amoe::uniform_sample(model.sample_reference_filter(500, rng));
  const Vector y = model.default_observation();
  const auto log_star = amoe::optimal_log_adjustments(model, ancestors.particles, y);
  const amoe::AuxiliaryProposal aux(ancestors);
  const amoe::OptimalProposal optimal(model, y);
  amoe::KldOptions options;
  options.log_optimal_adjustment = &log_star;
  const auto kld = amoe::estimate_kld(optimal, aux, amoe::filtering_kernel(model, y), 2000, rng, options);
  ASSERT_TRUE(kld.absolute_value.has_value());
  EXPECT_NEAR(*kld.absolute_value, amoe::adjustment_divergence(aux, log_star), 1e-10);
  EXPECT_NEAR(*kld.absolute_standard_error, 0.0, 1e-10);

  // Against an independent evaluation of the index divergence.
  double z_star = 0.0;
  for (double v : log_star) {
    z_star += std::exp(v);
  }
  double div = 0.0;
  for (double v : log_star) {
    const double p = std::exp(v) / z_star;
    div += p * std::log(p * 500.0);
  }
  EXPECT_NEAR(amoe::adjustment_divergence(aux, log_star), div, 1e-10);
}

// Ancestors on Gauss-Hermite nodes; the exact value follows from the toy grid.
TEST(Diagnostics, KldEstimateAgreesWithQuadrature) {
  namespace st = amoe::selftest;
  const st::ToyProblem problem{0.5, 0.3, 80};
  const auto grid = st::toy_grid(problem);
  const auto rule = st::gauss_hermite(problem.order);
  amoe::WeightedSample ancestors;
  ancestors.particles = Matrix(1, problem.order);
  for (int i = 0; i < problem.order; ++i) {
    ancestors.particles(0, i) = rule.nodes[static_cast<std::size_t>(i)];
  }
  ancestors.weights = rule.weights;
  const amoe::AuxiliaryProposal aux(ancestors);
  const st::ScalarMixture theta{{0.3, 0.7}, {0.2, 0.7}, {-0.4, 0.3}, {0.5, 0.2}};
  const amoe::MixtureKernel kernel(st::to_mixture(theta));
  const double a = problem.slope;
  const double s2 = problem.noise * problem.noise;
  const amoe::LogKernelFn l = [&](const Vector& x, const Vector& xp) {
    const double r = xp(0) - a * x(0);
    return -0.5 * std::log(2.0 * std::numbers::pi * s2) - 0.5 * r * r / s2;
  };
  const std::vector<double> log_star(static_cast<std::size_t>(problem.order), 0.0);
  amoe::KldOptions options;
  options.log_optimal_adjustment = &log_star;
  amoe::Rng rng(21);
  const auto kld = amoe::estimate_kld(kernel, aux, l, 40000, rng, options);
  const double cross = st::toy_kld(theta, grid);
  EXPECT_NEAR(kld.value_up_to_constant, cross, 4.0 * kld.standard_error);
  const double neg_entropy = -0.5 * std::log(2.0 * std::numbers::pi * s2) - 0.5;
  EXPECT_NEAR(*kld.absolute_value, cross + neg_entropy, 4.0 * *kld.absolute_standard_error);
  EXPECT_FALSE(kld.unreliable);
}

TEST(Diagnostics, KldNeedsAReasonableReferenceSample) {
  const amoe::LinearGaussianModel model;
  amoe::Rng rng(2);
  const amoe::AuxiliaryProposal aux(amoe::uniform_sample(model.sample_reference_filter(50, rng)));
  const amoe::PriorProposal prior(model);
  EXPECT_THROW((void)amoe::estimate_kld(prior, aux, amoe::filtering_kernel(model, model.default_observation()),
                                        10, rng),
               amoe::Error);
}

}  // namespace
