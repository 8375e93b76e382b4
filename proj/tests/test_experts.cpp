#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "amoe/errors.hpp"
#include "amoe/experts.hpp"
#include "amoe/parallel.hpp"

namespace {

using amoe::Matrix;
using amoe::MixtureParams;
using amoe::Vector;

MixtureParams three_experts(bool logistic, const amoe::StratumFamily& family = amoe::StratumFamily::gaussian()) {
  MixtureParams theta;
  theta.family = family;
  for (int j = 0; j < 3; ++j) {
    amoe::ExpertParams e;
    e.lambda = Matrix::Zero(2, 3);
    e.lambda(0, 0) = 0.5 + 0.2 * j;
    e.lambda(1, 1) = -0.3 * j;
    e.lambda(0, 2) = static_cast<double>(j) - 1.0;
    e.lambda(1, 2) = 0.5 * j;
    e.sigma = (0.2 + 0.1 * j) * Matrix::Identity(2, 2);
    e.sigma(0, 1) = e.sigma(1, 0) = 0.05;
    theta.experts.push_back(e);
  }
  if (logistic) {
    theta.gating = amoe::LogisticGating{(Matrix(2, 3) << 1.0, -0.5, 0.2, -0.7, 0.3, 0.1).finished()};
  } else {
    theta.gating = amoe::ConstantGating{(Vector(3) << 0.2, 0.5, 0.3).finished()};
  }
  return theta;
}

double normal2(const Vector& z, const Vector& m, const Matrix& s) {
  const Vector r = z - m;
  return -std::log(2.0 * M_PI) - 0.5 * std::log(s.determinant()) - 0.5 * r.dot(s.inverse() * r);
}

TEST(Experts, LogisticGatingIsASoftmaxWithReferenceExpert) {
  const auto theta = three_experts(true);
  const auto& beta = std::get<amoe::LogisticGating>(theta.gating).beta;
  const Vector x = (Vector(2) << 0.4, -1.3).finished();
  const Vector alpha = amoe::gating_weights(theta.gating, x);
  const double e0 = std::exp(beta(0, 0) * x(0) + beta(0, 1) * x(1) + beta(0, 2));
  const double e1 = std::exp(beta(1, 0) * x(0) + beta(1, 1) * x(1) + beta(1, 2));
  const double z = e0 + e1 + 1.0;
  EXPECT_NEAR(alpha(0), e0 / z, 1e-14);
  EXPECT_NEAR(alpha(1), e1 / z, 1e-14);
  EXPECT_NEAR(alpha(2), 1.0 / z, 1e-14);
}

TEST(Experts, GatingStaysOnTheSimplexForLargeLogits) {
  amoe::Rng rng(2);
  for (int k = 0; k < 200; ++k) {
    amoe::LogisticGating g{400.0 * Matrix::Random(2, 3)};
    const Vector alpha = amoe::gating_weights(g, 50.0 * rng.normal_vector(2));
    EXPECT_TRUE(alpha.allFinite());
    EXPECT_GE(alpha.minCoeff(), 0.0);
    EXPECT_NEAR(alpha.sum(), 1.0, 1e-12);
  }
}

TEST(Experts, MixtureDensityIsTheWeightedSumOfStrata) {
  for (bool logistic : {false, true}) {
    const auto theta = three_experts(logistic);
    amoe::Rng rng(4);
    for (int k = 0; k < 30; ++k) {
      const Vector x = rng.normal_vector(2);
      const Vector xp = rng.normal_vector(2);
      const Vector alpha = amoe::gating_weights(theta.gating, x);
      Vector xb(3);
      xb << x, 1.0;
      double sum = 0.0;
      Vector parts(3);
      for (int j = 0; j < 3; ++j) {
        parts(j) = alpha(j) * std::exp(normal2(xp, theta.experts[j].lambda * xb, theta.experts[j].sigma));
        sum += parts(j);
      }
      EXPECT_NEAR(amoe::proposal_log_density(theta, x, xp), std::log(sum), 1e-11);
      const Vector resp = amoe::responsibilities(theta, x, xp);
      EXPECT_TRUE(resp.isApprox(parts / sum, 1e-11));
    }
  }
}

TEST(Experts, ResponsibilitiesFallBackToGatingOnUnderflow) {
  const auto theta = three_experts(true);
  const amoe::MixtureKernel kernel(theta);
  const Vector x = (Vector(2) << 0.1, 0.2).finished();
  amoe::MixtureKernel::Evaluation eval;
  kernel.evaluate(amoe::extend(x), Vector::Constant(2, 1e200), eval);
  EXPECT_TRUE(eval.underflow);
  EXPECT_TRUE(eval.responsibilities.isApprox(amoe::gating_weights(theta.gating, x), 1e-14));
}

TEST(Experts, MixtureSamplerMatchesGatingFrequencies) {
  const auto theta = three_experts(true);
  const amoe::MixtureKernel kernel(theta);
  const Vector x = (Vector(2) << 0.3, -0.2).finished();
  const Vector alpha = amoe::gating_weights(theta.gating, x);
  amoe::Rng rng(8);
  Vector counts = Vector::Zero(3);
  const int n = 60000;
  for (int i = 0; i < n; ++i) {
    amoe::Index j = -1;
    (void)kernel.sample(x, rng, &j);
    counts(j) += 1.0;
  }
  for (int j = 0; j < 3; ++j) {
    const double se = std::sqrt(alpha(j) * (1.0 - alpha(j)) / n);
    EXPECT_NEAR(counts(j) / n, alpha(j), 5.0 * se);
  }
}

amoe::WeightedSample ancestors() {
  amoe::WeightedSample s;
  s.particles = (Matrix(2, 4) << 0, 1, 2, 3, 0, -1, -2, -3).finished();
  s.weights = {0.1, 0.2, 0.3, 0.4};
  return s;
}

TEST(Experts, AuxiliaryProposalSelectsProportionallyToWeightTimesAdjustment) {
  const amoe::AuxiliaryProposal aux(ancestors(), std::vector<double>{4.0, 1.0, 1.0, 0.5});
  const double z = 0.4 + 0.2 + 0.3 + 0.2;
  EXPECT_NEAR(aux.index_probability(0), 0.4 / z, 1e-14);
  EXPECT_NEAR(aux.index_probability(3), 0.2 / z, 1e-14);
  amoe::Rng rng(1);
  std::vector<int> hits(4, 0);
  const int n = 40000;
  for (int i = 0; i < n; ++i) {
    ++hits[static_cast<std::size_t>(aux.draw_index(rng))];
  }
  for (int i = 0; i < 4; ++i) {
    const double p = aux.index_probability(i);
    EXPECT_NEAR(hits[static_cast<std::size_t>(i)] / static_cast<double>(n), p, 5.0 * std::sqrt(p * (1 - p) / n));
  }
}

TEST(Experts, AllZeroSelectionWeightsAreDegenerate) {
  try {
    const amoe::AuxiliaryProposal aux(ancestors(), std::vector<double>{0.0, 0.0, 0.0, 0.0});
    FAIL() << "expected DegenerateAncestors";
  } catch (const amoe::Error& e) {
    EXPECT_EQ(e.code(), amoe::ErrorCode::kDegenerateAncestors);
  }
}

TEST(Experts, ImportanceWeightIsKernelOverAdjustedProposal) {
  const auto theta = three_experts(false);
  const amoe::MixtureKernel kernel(theta);
  const amoe::AuxiliaryProposal aux(ancestors(), std::vector<double>{2.0, 1.0, 1.0, 1.0});
  const amoe::LogKernelFn l = [](const Vector& x, const Vector& xp) { return -0.5 * (xp - x).squaredNorm(); };
  const Vector xp = (Vector(2) << 0.3, 0.1).finished();
  const double expected = std::exp(l(aux.ancestors().particle(0), xp)) /
                          (2.0 * std::exp(kernel.log_density(aux.ancestors().particle(0), xp)));
  EXPECT_NEAR(amoe::importance_weight(kernel, l, aux, 0, xp) / expected, 1.0, 1e-12);
}

class ZeroDensity final : public amoe::ProposalKernel {
 public:
  [[nodiscard]] double log_density(const Vector&, const Vector&) const override {
    return -std::numeric_limits<double>::infinity();
  }
  Vector sample(const Vector& x, amoe::Rng&, amoe::Index*) const override { return x; }
  [[nodiscard]] std::string name() const override { return "zero"; }
};

TEST(Experts, ZeroProposalDensityUnderPositiveKernelIsReported) {
  const amoe::AuxiliaryProposal aux(ancestors());
  const amoe::LogKernelFn l = [](const Vector&, const Vector&) { return 0.0; };
  try {
    (void)amoe::log_importance_weight(ZeroDensity{}, l, aux, 1, Vector::Zero(2));
    FAIL() << "expected AbsoluteContinuityViolation";
  } catch (const amoe::Error& e) {
    EXPECT_EQ(e.code(), amoe::ErrorCode::kAbsoluteContinuityViolation);
  }
  const amoe::LogKernelFn zero = [](const Vector&, const Vector&) {
    return -std::numeric_limits<double>::infinity();
  };
  EXPECT_EQ(amoe::importance_weight(ZeroDensity{}, zero, aux, 1, Vector::Zero(2)), 0.0);
}

TEST(Experts, DrawsDoNotDependOnTheThreadCount) {
  const amoe::MixtureKernel kernel(three_experts(true, amoe::StratumFamily::student_t(5.0)));
  const amoe::AuxiliaryProposal aux(ancestors());
  std::vector<std::vector<amoe::ProposalDraw>> runs;
  for (int threads : {1, 4}) {
    amoe::set_num_threads(threads);
    amoe::Rng rng(99);
    runs.push_back(amoe::propose(kernel, aux, 1000, rng));
  }
  amoe::set_num_threads(0);
  ASSERT_EQ(runs[0].size(), runs[1].size());
  for (std::size_t i = 0; i < runs[0].size(); ++i) {
    EXPECT_EQ(runs[0][i].ancestor, runs[1][i].ancestor);
    EXPECT_EQ(runs[0][i].component, runs[1][i].component);
    EXPECT_EQ(runs[0][i].child, runs[1][i].child);
  }
}

TEST(Experts, ValidationCatchesInconsistentGating) {
  auto theta = three_experts(false);
  theta.gating = amoe::ConstantGating{(Vector(3) << 0.5, 0.5, 0.5).finished()};
  EXPECT_THROW(amoe::validate(theta), amoe::Error);
  theta.gating = amoe::LogisticGating{Matrix::Zero(3, 3)};
  EXPECT_THROW(amoe::validate(theta), amoe::Error);
}

}  // namespace
