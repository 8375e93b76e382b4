#include <gtest/gtest.h>

#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <numbers>

#include "amoe/errors.hpp"
#include "amoe/models.hpp"

namespace {

using amoe::Matrix;
using amoe::Vector;

double normal_log(const Vector& z, const Vector& m, const Matrix& s) {
  const Vector r = z - m;
  return -0.5 * static_cast<double>(z.size()) * std::log(2.0 * std::numbers::pi) -
         0.5 * std::log(s.determinant()) - 0.5 * r.dot(s.inverse() * r);
}

// Monte Carlo estimate of L*(x) = E_q[g(X', y)] with its standard error.
std::pair<double, double> mc_adjustment(const amoe::StateSpaceModel& model, const Vector& x, const Vector& y,
                                        int n, std::uint64_t seed) {
  amoe::Rng rng(seed);
  double sum = 0.0;
  double sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double g = std::exp(model.log_likelihood(model.sample_prior(x, rng), y));
    sum += g;
    sq += g * g;
  }
  const double mean = sum / n;
  return {mean, std::sqrt((sq / n - mean * mean) / n)};
}

TEST(Models, LinearGaussianOptimalKernelFactorizesTheTarget) {
  const amoe::LinearGaussianModel model;
  const Vector y = model.default_observation();
  amoe::Rng rng(1);
  for (int k = 0; k < 20; ++k) {
    const Vector x = rng.normal_vector(2);
    const Vector xp = x + rng.normal_vector(2);
    const auto kernel = model.optimal_kernel(x, y);
    const double r = std::log(kernel.weights(0) * std::exp(normal_log(xp, kernel.means[0], kernel.covariance)) +
                              kernel.weights(1) * std::exp(normal_log(xp, kernel.means[1], kernel.covariance)));
    const double lhs = r + kernel.log_adjustment;
    const double rhs = model.log_likelihood(xp, y) + model.prior_log_density(x, xp);
    EXPECT_NEAR(lhs, rhs, 1e-8);
  }
}

TEST(Models, LinearGaussianPriorAndLikelihoodAreTheStatedGaussians) {
  const amoe::LinearGaussianModel model;
  const auto& p = model.params();
  const Vector x = (Vector(2) << 0.3, -0.8).finished();
  const Vector xp = (Vector(2) << 1.1, 0.4).finished();
  const Vector xb = (Vector(3) << x, 1.0).finished();
  const double q = 0.5 * std::exp(normal_log(xp, p.lambda1 * xb, p.sigma)) +
                   0.5 * std::exp(normal_log(xp, p.lambda2 * xb, p.sigma));
  EXPECT_NEAR(model.prior_log_density(x, xp), std::log(q), 1e-12);
  EXPECT_NEAR(model.log_likelihood(xp, model.default_observation()),
              normal_log(model.default_observation(), xp, p.sigma_y), 1e-12);
}

TEST(Models, LinearGaussianModesAreBalancedOnTheSymmetryAxis) {
  const amoe::LinearGaussianModel model;
  const auto kernel = model.optimal_kernel((Vector(2) << 0.7, 0.0).finished(), model.default_observation());
  EXPECT_NEAR(kernel.weights(0), 0.5, 1e-12);
  EXPECT_NEAR(kernel.weights(1), 0.5, 1e-12);
}

TEST(Models, OptimalAdjustmentsAgreeWithMonteCarlo) {
  const amoe::LinearGaussianModel lg;
  const amoe::BesselModel bessel;
  const amoe::TobitModel tobit;
  const amoe::TobitModel tobit_positive(amoe::TobitParams{.observation = 1.5});
  const std::vector<std::pair<const amoe::StateSpaceModel*, Vector>> cases{
      {&lg, (Vector(2) << 0.2, 0.9).finished()},
      {&bessel, (Vector(2) << 0.7, 0.7).finished()},
      {&bessel, (Vector(2) << -0.4, 1.5).finished()},
      {&tobit, (Vector(2) << 1.0, -0.5).finished()},
      {&tobit_positive, (Vector(2) << 0.5, 0.5).finished()},
  };
  std::uint64_t seed = 10;
  for (const auto& [model, x] : cases) {
    const Vector y = model->default_observation();
    const auto [mean, se] = mc_adjustment(*model, x, y, 400000, seed++);
    EXPECT_NEAR(std::exp(model->optimal_log_adjustment(x, y)), mean, 4.0 * se) << model->id();
  }
}

TEST(Models, TobitOptimalSamplerMatchesReweightedPrior) {
  for (double obs : {0.0, 2.0}) {
    const amoe::TobitModel model(amoe::TobitParams{.observation = obs});
    const Vector y = model.default_observation();
    const Vector x = (Vector(2) << 0.3, -0.2).finished();
    amoe::Rng rng(5);
    const int n = 200000;
    Vector direct = Vector::Zero(2);
    for (int i = 0; i < n; ++i) {
      direct += model.sample_optimal(x, y, rng);
    }
    direct /= n;
    Vector weighted = Vector::Zero(2);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      const Vector xp = model.sample_prior(x, rng);
      const double g = std::exp(model.log_likelihood(xp, y));
      weighted += g * xp;
      total += g;
    }
    weighted /= total;
    EXPECT_LT((direct - weighted).norm(), 0.03) << "y = " << obs;
  }
}

TEST(Models, TobitLikelihoodHasAnAtomAtZero) {
  const amoe::TobitModel model;
  const Vector xp = (Vector(2) << 0.4, -1.0).finished();
  const double mean = model.params().b.dot(xp);
  const double sd = std::sqrt(model.params().sigma_v2);
  const double atom = boost::math::cdf(boost::math::normal(mean, sd), 0.0);
  EXPECT_NEAR(model.log_likelihood(xp, Vector::Zero(1)), std::log(atom), 1e-12);
}

TEST(Models, LogNormalCdfMatchesBoostAndStaysFiniteInTheTail) {
  const boost::math::normal standard;
  for (double z = -35.0; z <= 6.0; z += 0.25) {
    EXPECT_NEAR(amoe::log_normal_cdf(z), std::log(boost::math::cdf(standard, z)), 1e-10 * (1.0 + z * z));
  }
  const double far = amoe::log_normal_cdf(-60.0);
  EXPECT_TRUE(std::isfinite(far));
  EXPECT_NEAR(far, -0.5 * 3600.0 - std::log(60.0) - 0.5 * std::log(2.0 * std::numbers::pi), 1e-3);
}

TEST(Models, ObservationsAreChecked) {
  const amoe::TobitModel tobit;
  try {
    tobit.check_observation(Vector::Constant(1, -1.0));
    FAIL();
  } catch (const amoe::Error& e) {
    EXPECT_EQ(e.code(), amoe::ErrorCode::kInvalidObservation);
  }
  const amoe::BesselModel bessel;
  EXPECT_THROW(bessel.check_observation(Vector::Zero(2)), amoe::Error);
  EXPECT_THROW(bessel.check_observation(Vector::Constant(1, std::nan(""))), amoe::Error);
}

TEST(Models, UnknownModelIsAConfigurationError) {
  try {
    (void)amoe::make_default_model("heston");
    FAIL();
  } catch (const amoe::Error& e) {
    EXPECT_EQ(e.code(), amoe::ErrorCode::kConfig);
  }
  for (const char* id : {"linear_gaussian", "bessel", "tobit"}) {
    EXPECT_EQ(amoe::make_default_model(id)->id(), id);
  }
}

TEST(Models, SimulatedObservationsFollowTheLikelihood) {
  const amoe::LinearGaussianModel model;
  amoe::Rng rng(3);
  const Vector x = (Vector(2) << 0.5, 0.5).finished();
  Vector mean = Vector::Zero(2);
  const int n = 50000;
  for (int i = 0; i < n; ++i) {
    mean += model.sample_observation(x, rng);
  }
  mean /= n;
  EXPECT_LT((mean - x).norm(), 5.0 * std::sqrt(0.1 / n) * std::sqrt(2.0));
}

}  // namespace
