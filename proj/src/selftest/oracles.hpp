#pragma once

#include <array>
#include <functional>
#include <vector>

#include "amoe/adaptation.hpp"
#include "amoe/strata.hpp"

namespace amoe::selftest {

// Gauss-Hermite rule for the standard normal law (weights sum to one),
// computed by the Golub-Welsch eigenvalue method.
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};
QuadratureRule gauss_hermite(int order);

// One-dimensional toy: ancestors from N(0, 1), kernel l(x, x') = N(x'; a x, s^2).
struct ToyProblem {
  double slope = 0.5;
  double noise = 0.3;
  int order = 400;
};

// Tensor grid of (x, x') nodes with product weights summing to one.
struct ToyGrid {
  std::vector<double> x;
  std::vector<double> xp;
  std::vector<double> w;
};
ToyGrid toy_grid(const ToyProblem& problem);

// Two-expert constant-gating scalar mixture, coded independently of the library.
struct ScalarMixture {
  std::array<double, 2> weight{};
  std::array<double, 2> slope{};
  std::array<double, 2> intercept{};
  std::array<double, 2> variance{};
};

ScalarMixture batch_em_step(const ScalarMixture& theta, const ToyGrid& grid);
// -E log r_theta(x, x') under the grid law.
double toy_kld(const ScalarMixture& theta, const ToyGrid& grid);

MixtureParams to_mixture(const ScalarMixture& theta);
ScalarMixture from_mixture(const MixtureParams& theta);

// Unconstrained coordinates: logit of the first weight, slopes, intercepts and log variances.
std::array<double, 7> unconstrained(const ScalarMixture& theta);
ScalarMixture from_unconstrained(const std::array<double, 7>& coords);

// Exact statistics for the library's adaptation recursion on the grid.
ExpectationFn grid_expectation(const ToyGrid& grid);

// Student-t density as a Gaussian scale mixture over u ~ Gamma(nu/2, nu/2), by quadrature.
double gaussian_gamma_density(const ExpertParams& params, double nu, const Vector& ancestor, const Vector& child);
// E[u | x, x'] by the same quadrature.
double gaussian_gamma_u_mean(const ExpertParams& params, double nu, const Vector& ancestor, const Vector& child);

// Kolmogorov-Smirnov distance between a sample and a continuous CDF.
double ks_distance(std::vector<double> sample, const std::function<double(double)>& cdf);

}  // namespace amoe::selftest
