#include <gtest/gtest.h>

#include <cmath>

#include "amoe/adaptation.hpp"
#include "amoe/warnings.hpp"
#include "selftest/oracles.hpp"

namespace {

using amoe::Index;
using amoe::Matrix;
using amoe::MixtureParams;
using amoe::SuffStats;
using amoe::Vector;
using amoe::WeightedPair;

MixtureParams two_experts(bool logistic) {
  MixtureParams theta;
  for (int j = 0; j < 2; ++j) {
    amoe::ExpertParams e;
    e.lambda = Matrix::Zero(2, 3);
    e.lambda(0, 0) = j == 0 ? 0.9 : -0.4;
    e.lambda(1, 1) = 0.5;
    e.lambda(0, 2) = j == 0 ? 1.0 : -1.0;
    e.sigma = (j == 0 ? 0.4 : 0.7) * Matrix::Identity(2, 2);
    theta.experts.push_back(e);
  }
  if (logistic) {
    theta.gating = amoe::LogisticGating{(Matrix(1, 3) << 0.6, -0.3, 0.2).finished()};
  } else {
    theta.gating = amoe::ConstantGating{(Vector(2) << 0.35, 0.65).finished()};
  }
  return theta;
}

// A weighted sample of (x, x') pairs drawn from a piecewise-linear law.
std::vector<WeightedPair> sample_pairs(int n, std::uint64_t seed) {
  amoe::Rng rng(seed);
  std::vector<WeightedPair> pairs;
  for (int i = 0; i < n; ++i) {
    const Vector x = rng.normal_vector(2);
    Vector xp = rng.normal_vector(2) * 0.5;
    xp(0) += x(0) > 0.0 ? 1.0 + 0.8 * x(0) : -1.0 - 0.3 * x(1);
    xp(1) += 0.4 * x(1);
    pairs.push_back({amoe::extend(x), xp, 0.2 + rng.uniform()});
  }
  return pairs;
}

SuffStats normalized_stats(const MixtureParams& theta, const std::vector<WeightedPair>& pairs) {
  const amoe::MixtureKernel kernel(theta);
  const auto batch = amoe::accumulate_weighted_pairs(kernel, pairs);
  return amoe::robbins_monro_update({}, batch.increment, batch.weight_sum, batch.draws, 0.3);
}

TEST(Adaptation, FirstRobbinsMonroCallUsesUnitStep) {
  const auto theta = two_experts(false);
  const auto pairs = sample_pairs(500, 1);
  const amoe::MixtureKernel kernel(theta);
  const auto batch = amoe::accumulate_weighted_pairs(kernel, pairs);
  const SuffStats first = amoe::robbins_monro_update({}, batch.increment, batch.weight_sum, batch.draws, 0.01);
  double w = 0.0;
  for (const auto& pair : pairs) {
    w += pair.weight;
  }
  EXPECT_NEAR(first.c, w / 500.0, 1e-12);
  EXPECT_NEAR(first.p.sum(), 1.0, 1e-12);
  EXPECT_TRUE(first.s[0].s2.isApprox(batch.increment.s[0].s2 / w, 1e-12));

  // Second call: convex combination with the step, c follows its own recursion.
  const double lambda = 0.25;
  const auto batch2 = amoe::accumulate_weighted_pairs(kernel, sample_pairs(300, 2));
  const SuffStats second = amoe::robbins_monro_update(first, batch2.increment, batch2.weight_sum, 300, lambda);
  const double c2 = (1.0 - lambda) * first.c + lambda * batch2.weight_sum / 300.0;
  EXPECT_NEAR(second.c, c2, 1e-12);
  const Matrix expected = (1.0 - lambda) * first.s[1].s1 + lambda * batch2.increment.s[1].s1 / (c2 * 300.0);
  EXPECT_TRUE(second.s[1].s1.isApprox(expected, 1e-12));
}

TEST(Adaptation, ZeroWeightBatchIsADegenerateNormalizer) {
  const auto theta = two_experts(false);
  const auto batch = amoe::accumulate_weighted_pairs(amoe::MixtureKernel(theta), sample_pairs(10, 3));
  try {
    (void)amoe::robbins_monro_update({}, batch.increment, 0.0, 10, 1.0);
    FAIL();
  } catch (const amoe::Error& e) {
    EXPECT_EQ(e.code(), amoe::ErrorCode::kDegenerateNormalizer);
  }
}

// Weighted least squares per expert with weights w * r_j, computed point by point.
TEST(Adaptation, MStepMatchesWeightedLeastSquares) {
  const auto theta = two_experts(false);
  const auto pairs = sample_pairs(2000, 4);
  const SuffStats stats = normalized_stats(theta, pairs);
  amoe::AdaptationConfig config;
  const MixtureParams next = amoe::m_step(stats, theta, config);

  const amoe::MixtureKernel kernel(theta);
  double total = 0.0;
  Vector mass = Vector::Zero(2);
  for (int j = 0; j < 2; ++j) {
    Matrix xtx = Matrix::Zero(3, 3);
    Matrix xty = Matrix::Zero(3, 2);
    double wsum = 0.0;
    std::vector<double> wr;
    for (const auto& pair : pairs) {
      const Vector r = kernel.responsibilities(pair.ext_ancestor.head(2), pair.child);
      const double w = pair.weight * r(j);
      wr.push_back(w);
      xtx += w * pair.ext_ancestor * pair.ext_ancestor.transpose();
      xty += w * pair.ext_ancestor * pair.child.transpose();
      wsum += w;
    }
    const Matrix lambda = xtx.fullPivLu().solve(xty).transpose();
    Matrix sigma = Matrix::Zero(2, 2);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const Vector res = pairs[i].child - lambda * pairs[i].ext_ancestor;
      sigma += wr[i] * res * res.transpose();
    }
    sigma /= wsum;
    EXPECT_TRUE(next.experts[j].lambda.isApprox(lambda, 1e-9));
    EXPECT_TRUE(next.experts[j].sigma.isApprox(sigma, 1e-9));
    mass(j) = wsum;
    total += wsum;
  }
  const Vector weights = std::get<amoe::ConstantGating>(next.gating).weights;
  EXPECT_NEAR(weights(0), mass(0) / total, 1e-12);
}

TEST(Adaptation, PooledCovarianceDividesByTotalMass) {
  auto theta = two_experts(false);
  const auto stats = normalized_stats(theta, sample_pairs(800, 5));
  amoe::AdaptationConfig config;
  const MixtureParams separate = amoe::m_step(stats, theta, config);
  config.pooled = true;
  const MixtureParams pooled = amoe::m_step(stats, theta, config);
  const Matrix expected = (stats.p(0) * separate.experts[0].sigma + stats.p(1) * separate.experts[1].sigma) /
                          stats.p.sum();
  EXPECT_TRUE(pooled.experts[0].sigma.isApprox(expected, 1e-10));
  EXPECT_TRUE(pooled.experts[1].sigma.isApprox(expected, 1e-10));
  config.literal_pooling = true;
  const MixtureParams literal = amoe::m_step(stats, theta, config);
  EXPECT_TRUE(literal.experts[0].sigma.isApprox(expected * stats.p.sum() / 2.0, 1e-10));
}

TEST(Adaptation, DeadComponentIsResetAndGatingKept) {
  const auto theta = two_experts(false);
  SuffStats stats = normalized_stats(theta, sample_pairs(400, 6));
  stats.p(1) = 0.0;
  stats.s[1] = amoe::ExpertSuffStat::zeros(2, 2);
  amoe::reset_warnings();
  amoe::AdaptationConfig config;
  const MixtureParams next = amoe::m_step(stats, theta, config);
  EXPECT_GE(amoe::warning_count(amoe::Warning::kComponentReset), 1u);
  EXPECT_TRUE(next.experts[1].sigma.isApprox(next.experts[0].sigma, 1e-12));
  EXPECT_TRUE(std::get<amoe::ConstantGating>(next.gating).weights.isApprox(
      std::get<amoe::ConstantGating>(theta.gating).weights));
}

// Weighted gating objective sum_i w_i sum_j r_ij log alpha_j(x_i; beta) / W.
double gating_objective(const Matrix& beta, const std::vector<WeightedPair>& pairs,
                        const std::vector<Vector>& resp) {
  double total = 0.0;
  double w = 0.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const double logit = beta.row(0).dot(pairs[i].ext_ancestor);
    const double lse = std::log1p(std::exp(logit));
    total += pairs[i].weight * (resp[i](0) * (logit - lse) + resp[i](1) * (-lse));
    w += pairs[i].weight;
  }
  return total / w;
}

TEST(Adaptation, GatingStatisticsAreGradientAndHessianOfTheObjective) {
  const auto theta = two_experts(true);
  const auto pairs = sample_pairs(600, 7);
  const amoe::MixtureKernel kernel(theta);
  std::vector<Vector> resp;
  for (const auto& pair : pairs) {
    resp.push_back(kernel.responsibilities(pair.ext_ancestor.head(2), pair.child));
  }
  const SuffStats stats = normalized_stats(theta, pairs);
  const Matrix beta = std::get<amoe::LogisticGating>(theta.gating).beta;
  const double h = 1e-4;
  for (int m = 0; m < 3; ++m) {
    Matrix up = beta;
    Matrix down = beta;
    up(0, m) += h;
    down(0, m) -= h;
    const double fd = (gating_objective(up, pairs, resp) - gating_objective(down, pairs, resp)) / (2 * h);
    EXPECT_NEAR((*stats.t)(0, m), fd, 1e-7);
    for (int k = 0; k < 3; ++k) {
      Matrix pp = beta, pm = beta, mp = beta, mm = beta;
      pp(0, m) += h, pp(0, k) += h;
      pm(0, m) += h, pm(0, k) -= h;
      mp(0, m) -= h, mp(0, k) += h;
      mm(0, m) -= h, mm(0, k) -= h;
      const double fd2 = (gating_objective(pp, pairs, resp) - gating_objective(pm, pairs, resp) -
                          gating_objective(mp, pairs, resp) + gating_objective(mm, pairs, resp)) /
                         (4 * h * h);
      EXPECT_NEAR((*stats.v)(m, k), fd2, 1e-5);
    }
  }
}

TEST(Adaptation, LogisticMStepIsANewtonStep) {
  const auto theta = two_experts(true);
  const SuffStats stats = normalized_stats(theta, sample_pairs(600, 8));
  amoe::AdaptationConfig config;
  const MixtureParams next = amoe::m_step(stats, theta, config);
  const Matrix before = std::get<amoe::LogisticGating>(theta.gating).beta;
  const Matrix after = std::get<amoe::LogisticGating>(next.gating).beta;
  const Vector t = stats.t->row(0).transpose();
  const Vector step = (-*stats.v).fullPivLu().solve(t);
  ASSERT_LT(step.norm(), 10.0);
  EXPECT_TRUE((after - before).row(0).transpose().isApprox(step, 1e-6));
}

TEST(Adaptation, RecenteringMovesTheGradientAlongTheHessian) {
  const auto theta = two_experts(true);
  SuffStats stats = normalized_stats(theta, sample_pairs(300, 9));
  auto moved = theta;
  std::get<amoe::LogisticGating>(moved.gating).beta(0, 1) += 0.5;
  const Matrix t0 = *stats.t;
  amoe::recenter_gating_gradient(stats, theta, moved);
  for (int m = 0; m < 3; ++m) {
    EXPECT_NEAR((*stats.t)(0, m), t0(0, m) + 0.5 * (*stats.v)(m, 1), 1e-14);
  }
}

TEST(Adaptation, CompleteDataObjectiveMatchesPointwiseSum) {
  const auto theta = two_experts(false);
  const auto pairs = sample_pairs(400, 10);
  const SuffStats stats = normalized_stats(theta, pairs);
  const amoe::MixtureKernel kernel(theta);
  MixtureParams other = two_experts(false);
  other.experts[0].sigma(0, 1) = other.experts[0].sigma(1, 0) = 0.1;
  other.experts[1].lambda(1, 2) = 0.7;
  const Vector beta = std::get<amoe::ConstantGating>(other.gating).weights;
  double direct = 0.0;
  double w = 0.0;
  for (const auto& pair : pairs) {
    const Vector r = kernel.responsibilities(pair.ext_ancestor.head(2), pair.child);
    for (int j = 0; j < 2; ++j) {
      const auto& e = other.experts[j];
      const Vector res = pair.child - e.lambda * pair.ext_ancestor;
      const double logn = -0.5 * std::log(e.sigma.determinant()) - 0.5 * res.dot(e.sigma.inverse() * res);
      direct += pair.weight * r(j) * (std::log(beta(j)) + logn);
    }
    w += pair.weight;
  }
  EXPECT_NEAR(amoe::expected_complete_loglik(stats, other), direct / w, 1e-10);
}

TEST(Adaptation, ExactRecursionMatchesIndependentEm) {
  namespace st = amoe::selftest;
  const st::ToyProblem problem{0.5, 0.3, 60};
  const auto grid = st::toy_grid(problem);
  const st::ScalarMixture start{{0.4, 0.6}, {0.1, 0.9}, {-0.5, 0.5}, {0.6, 0.3}};
  const auto config = amoe::make_adaptation_config(5, 1, 1, amoe::StepRule::kConstant, std::sqrt(5.0));
  const auto result = amoe::adapt_exact(st::to_mixture(start), st::grid_expectation(grid), config);
  st::ScalarMixture oracle = start;
  for (int k = 0; k < 5; ++k) {
    oracle = st::batch_em_step(oracle, grid);
  }
  const auto lib = st::from_mixture(result.theta);
  for (int j = 0; j < 2; ++j) {
    EXPECT_NEAR(lib.weight[j], oracle.weight[j], 1e-10);
    EXPECT_NEAR(lib.slope[j], oracle.slope[j], 1e-10);
    EXPECT_NEAR(lib.intercept[j], oracle.intercept[j], 1e-10);
    EXPECT_NEAR(lib.variance[j], oracle.variance[j], 1e-10);
  }
}

TEST(Adaptation, StepScheduleFollowsTheRule) {
  const auto constant = amoe::make_adaptation_config(16, 100, 300, amoe::StepRule::kConstant, 2.0);
  EXPECT_EQ(constant.sample_sizes.front(), 300);
  EXPECT_EQ(constant.sample_sizes.back(), 100);
  EXPECT_DOUBLE_EQ(constant.step_sizes[7], 0.5);
  const auto power = amoe::make_adaptation_config(4, 10, 10, amoe::StepRule::kPower, 1.0, 0.6);
  EXPECT_NEAR(power.step_sizes[2], std::pow(3.0, -0.6), 1e-15);
  EXPECT_THROW(amoe::make_adaptation_config(4, 10, 10, amoe::StepRule::kConstant, 3.0), amoe::Error);
  EXPECT_THROW(amoe::make_adaptation_config(4, 0, 10, amoe::StepRule::kConstant, 1.0), amoe::Error);
}

TEST(Adaptation, InitialMixtureFollowsTheGuidelines) {
  amoe::Rng rng(12);
  std::vector<Vector> children;
  std::vector<double> weights;
  for (int i = 0; i < 500; ++i) {
    children.push_back((Vector(2) << 1.0 + 2.0 * rng.normal(), -1.0 + 0.5 * rng.normal()).finished());
    weights.push_back(rng.uniform());
  }
  const auto theta = amoe::initial_mixture(children, weights, 3, 2, amoe::StratumFamily::gaussian(), true, false);
  Vector mean = Vector::Zero(2);
  double total = 0.0;
  for (std::size_t i = 0; i < children.size(); ++i) {
    mean += weights[i] * children[i];
    total += weights[i];
  }
  mean /= total;
  Matrix cov = Matrix::Zero(2, 2);
  for (std::size_t i = 0; i < children.size(); ++i) {
    cov += weights[i] / total * (children[i] - mean) * (children[i] - mean).transpose();
  }
  Vector intercepts = Vector::Zero(2);
  for (const auto& e : theta.experts) {
    EXPECT_TRUE(e.lambda.leftCols(2).isZero());
    EXPECT_TRUE(e.sigma.isApprox(cov, 1e-10));
    intercepts += e.lambda.col(2) / 3.0;
  }
  EXPECT_TRUE(intercepts.isApprox(mean, 1e-10));
  EXPECT_GT((theta.experts[0].lambda.col(2) - theta.experts[1].lambda.col(2)).norm(), 1.0);
  EXPECT_TRUE(std::get<amoe::LogisticGating>(theta.gating).beta.isZero());
}

TEST(Adaptation, BatchFitDoesNotDecreaseTheWeightedLikelihood) {
  const auto pairs = sample_pairs(1500, 13);
  const auto theta = two_experts(false);
  amoe::AdaptationConfig config;
  auto loglik = [&](const MixtureParams& t) {
    double s = 0.0;
    for (const auto& pair : pairs) {
      s += pair.weight * amoe::proposal_log_density(t, pair.ext_ancestor.head(2), pair.child);
    }
    return s;
  };
  double previous = loglik(theta);
  MixtureParams current = theta;
  for (int k = 0; k < 10; ++k) {
    current = amoe::fit_mixture(current, pairs, 1, config);
    const double now = loglik(current);
    EXPECT_GE(now, previous - 1e-8 * std::abs(previous));
    previous = now;
  }
}

}  // namespace
