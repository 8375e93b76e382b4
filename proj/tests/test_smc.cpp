#include <gtest/gtest.h>

#include <cmath>

#include "amoe/diagnostics.hpp"
#include "amoe/errors.hpp"
#include "amoe/parallel.hpp"
#include "amoe/smc.hpp"

namespace {

using amoe::FilterConfig;
using amoe::Matrix;
using amoe::Vector;

amoe::WeightedSample start_sample(const amoe::StateSpaceModel& model, amoe::Index n, std::uint64_t seed) {
  amoe::Rng rng(seed);
  amoe::WeightedSample s;
  s.particles.resize(model.state_dim(), n);
  for (amoe::Index i = 0; i < n; ++i) {
    s.particles.col(i) = model.sample_initial(rng);
  }
  s.weights.assign(static_cast<std::size_t>(n), 1.0);
  return s;
}

FilterConfig adapted_config(amoe::Index n) {
  FilterConfig config;
  config.n_particles = n;
  config.proposal = amoe::ProposalMode::kAdapted;
  config.adapted.adaptation = amoe::make_adaptation_config(4, 200, 400, amoe::StepRule::kConstant, 1.0);
  return config;
}

TEST(Smc, FullyAdaptedStepHasEqualWeights) {
  const amoe::TobitModel model(amoe::TobitParams{.observation = 0.8});
  FilterConfig config;
  config.n_particles = 500;
  config.proposal = amoe::ProposalMode::kOptimal;
  config.adjustment = amoe::AdjustmentMode::kOptimal;
  amoe::Rng rng(1);
  const auto out = amoe::apf_step(start_sample(model, 500, 2), model, model.default_observation(), config, rng);
  const double first = out.sample.weights.front();
  for (double w : out.sample.weights) {
    EXPECT_NEAR(w / first, 1.0, 1e-9);
  }
  EXPECT_NEAR(amoe::relative_ess(out.sample.weights), 1.0, 1e-12);
}

TEST(Smc, BootstrapWeightsAreTheLikelihood) {
  const amoe::BesselModel model;
  FilterConfig config;
  config.n_particles = 300;
  amoe::Rng rng(3);
  const Vector y = model.default_observation();
  const auto out = amoe::apf_step(start_sample(model, 300, 4), model, y, config, rng);
  ASSERT_EQ(out.sample.size(), 300);
  ASSERT_TRUE(out.sample.ancestors.has_value());
  for (amoe::Index i = 0; i < out.sample.size(); ++i) {
    const double g = std::exp(model.log_likelihood(out.sample.particle(i), y));
    EXPECT_NEAR(out.sample.weights[static_cast<std::size_t>(i)], g, 1e-12 * (1.0 + g));
  }
}

TEST(Smc, NormalizedWeightsSumToOneExactly) {
  amoe::WeightedSample s;
  s.particles = Matrix::Zero(1, 7);
  s.weights = {0.1, 0.7, 1e-300, 0.0, 3.3, 2.0 / 3.0, 0.0};
  const auto n = amoe::normalize_weights(s);
  double total = 0.0;
  for (double w : n.weights) {
    EXPECT_GE(w, 0.0);
    total += w;
  }
  EXPECT_EQ(total, 1.0);
  s.weights.assign(7, 0.0);
  try {
    (void)amoe::normalize_weights(s);
    FAIL();
  } catch (const amoe::Error& e) {
    EXPECT_EQ(e.code(), amoe::ErrorCode::kFilterCollapse);
  }
}

TEST(Smc, BudgetSplitReducesThePropagatedSample) {
  const amoe::LinearGaussianModel model;
  auto config = adapted_config(1000);
  config.adapted.budget_fraction = 0.2;
  amoe::Rng rng(5);
  const auto out = amoe::apf_step(start_sample(model, 1000, 6), model, model.default_observation(), config, rng);
  EXPECT_EQ(out.sample.size(), 800);
  ASSERT_TRUE(out.trace.has_value());
  // 20% of 1000 spread over 4 iterations; the final row only describes theta_L.
  ASSERT_EQ(out.trace->iterations.size(), 5u);
  for (std::size_t l = 0; l < 4; ++l) {
    EXPECT_EQ(out.trace->iterations[l].draws, 50);
  }
}

TEST(Smc, FilterTraceHasOneRowPerStepAndIsReproducible) {
  const amoe::LinearGaussianModel model;
  amoe::Rng sim_rng(7);
  const auto sim = amoe::simulate(model, 6, sim_rng);
  EXPECT_EQ(sim.states.size(), 7u);
  EXPECT_EQ(sim.observations.size(), 6u);
  const auto config = adapted_config(400);
  std::vector<amoe::FilterTrace> traces;
  for (int threads : {1, 3}) {
    amoe::set_num_threads(threads);
    amoe::Rng rng(8);
    traces.push_back(amoe::run_filter(model, sim.observations, config, rng));
  }
  amoe::set_num_threads(0);
  ASSERT_FALSE(traces[0].collapsed);
  ASSERT_EQ(traces[0].steps.size(), 7u);
  for (std::size_t k = 0; k < traces[0].steps.size(); ++k) {
    EXPECT_EQ(traces[0].steps[k].step, static_cast<amoe::Index>(k));
    EXPECT_EQ(traces[0].steps[k].ess, traces[1].steps[k].ess);
    EXPECT_EQ(traces[0].steps[k].estimate, traces[1].steps[k].estimate);
  }
}

// The filter mean tracks the simulated state in a linear-Gaussian run.
TEST(Smc, FilterMeanTracksTheState) {
  const amoe::LinearGaussianModel model;
  amoe::Rng sim_rng(9);
  const auto sim = amoe::simulate(model, 10, sim_rng);
  FilterConfig config;
  config.n_particles = 4000;
  amoe::Rng rng(10);
  const auto trace = amoe::run_filter(model, sim.observations, config, rng);
  ASSERT_FALSE(trace.collapsed);
  double err = 0.0;
  for (std::size_t k = 1; k < trace.steps.size(); ++k) {
    err += (trace.steps[k].estimate - sim.states[k]).norm();
  }
  // Observation noise has standard deviation ~0.32 per coordinate.
  EXPECT_LT(err / 10.0, 0.5);
}

TEST(Smc, StrideReusesTheFittedProposal) {
  const amoe::LinearGaussianModel model;
  amoe::Rng sim_rng(11);
  const auto sim = amoe::simulate(model, 4, sim_rng);
  auto config = adapted_config(300);
  config.adapted.stride = 2;
  amoe::Rng rng(12);
  const auto trace = amoe::run_filter(model, sim.observations, config, rng);
  EXPECT_FALSE(trace.collapsed);
  EXPECT_EQ(trace.steps.size(), 5u);
}

TEST(Smc, InvalidConfigurationsAreRejected) {
  auto config = adapted_config(100);
  config.adapted.budget_fraction = 1.0;
  EXPECT_THROW(amoe::validate(config), amoe::Error);
  config = adapted_config(1);
  EXPECT_THROW(amoe::validate(config), amoe::Error);
  config = adapted_config(100);
  config.adapted.stride = 0;
  EXPECT_THROW(amoe::validate(config), amoe::Error);
}

}  // namespace
