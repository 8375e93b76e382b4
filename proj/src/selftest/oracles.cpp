// Copyright 2026 The amoe-smc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "selftest/oracles.hpp"

#include <algorithm>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Eigenvalues>

#include "amoe/linalg.hpp"

namespace amoe::selftest {
namespace {

double normal_pdf(double x, double mean, double variance) {
  const double r = x - mean;
  return std::exp(-0.5 * r * r / variance) / std::sqrt(2.0 * std::numbers::pi * variance);
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

QuadratureRule gauss_hermite(int order) {
  // Jacobi matrix of the monic probabilists' Hermite recurrence.
  const Index n = order;
  Vector diagonal = Vector::Zero(n);
  Vector off(n > 1 ? n - 1 : 0);
  for (Index k = 0; k + 1 < n; ++k) {
    off(k) = std::sqrt(static_cast<double>(k + 1));
  }
  Eigen::SelfAdjointEigenSolver<Matrix> solver;
  solver.computeFromTridiagonal(diagonal, off, Eigen::ComputeEigenvectors);
  QuadratureRule rule;
  for (Index k = 0; k < n; ++k) {
    rule.nodes.push_back(solver.eigenvalues()(k));
    const double v = solver.eigenvectors()(0, k);
    rule.weights.push_back(v * v);
  }
  return rule;
}

ToyGrid toy_grid(const ToyProblem& problem) {
  const QuadratureRule rule = gauss_hermite(problem.order);
  ToyGrid grid;
  const std::size_t n = rule.nodes.size();
  grid.x.reserve(n * n);
  grid.xp.reserve(n * n);
  grid.w.reserve(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      grid.x.push_back(rule.nodes[i]);
      grid.xp.push_back(problem.slope * rule.nodes[i] + problem.noise * rule.nodes[k]);
      grid.w.push_back(rule.weights[i] * rule.weights[k]);
    }
  }
  return grid;
}

ScalarMixture batch_em_step(const ScalarMixture& theta, const ToyGrid& grid) {
  // Weighted moments per expert: sum r, r x, r x^2, r x', r x x', r x'^2.
  std::array<std::array<double, 6>, 2> m{};
  for (std::size_t k = 0; k < grid.w.size(); ++k) {
    const double x = grid.x[k];
    const double y = grid.xp[k];
    double dens[2];
    for (int j = 0; j < 2; ++j) {
      dens[j] = theta.weight[j] * normal_pdf(y, theta.slope[j] * x + theta.intercept[j], theta.variance[j]);
    }
    const double total = dens[0] + dens[1];
    if (!(total > 0.0)) {
      continue;
    }
    for (int j = 0; j < 2; ++j) {
      const double r = grid.w[k] * dens[j] / total;
      m[j][0] += r;
      m[j][1] += r * x;
      m[j][2] += r * x * x;
      m[j][3] += r * y;
      m[j][4] += r * x * y;
      m[j][5] += r * y * y;
    }
  }
  ScalarMixture out;
  const double mass = m[0][0] + m[1][0];
  for (int j = 0; j < 2; ++j) {
    const auto& s = m[j];
    const double det = s[2] * s[0] - s[1] * s[1];
    const double a = (s[4] * s[0] - s[3] * s[1]) / det;
    const double b = (s[2] * s[3] - s[1] * s[4]) / det;
    // Residual second moment: sum r (y - a x - b)^2.
    const double rss = s[5] - 2.0 * a * s[4] - 2.0 * b * s[3] + a * a * s[2] + 2.0 * a * b * s[1] + b * b * s[0];
    out.weight[j] = s[0] / mass;
    out.slope[j] = a;
    out.intercept[j] = b;
    out.variance[j] = rss / s[0];
  }
  return out;
}

double toy_kld(const ScalarMixture& theta, const ToyGrid& grid) {
  double out = 0.0;
  for (std::size_t k = 0; k < grid.w.size(); ++k) {
    if (grid.w[k] == 0.0) {
      continue;
    }
    double terms[2];
    for (int j = 0; j < 2; ++j) {
      const double r = grid.xp[k] - theta.slope[j] * grid.x[k] - theta.intercept[j];
      terms[j] = std::log(theta.weight[j]) - 0.5 * std::log(2.0 * std::numbers::pi * theta.variance[j]) -
                 0.5 * r * r / theta.variance[j];
    }
    const double top = std::max(terms[0], terms[1]);
    out -= grid.w[k] * (top + std::log(std::exp(terms[0] - top) + std::exp(terms[1] - top)));
  }
  return out;
}

MixtureParams to_mixture(const ScalarMixture& theta) {
  MixtureParams out;
  out.family = StratumFamily::gaussian();
  Vector weights(2);
  for (int j = 0; j < 2; ++j) {
    weights(j) = theta.weight[j];
    ExpertParams expert{Matrix(1, 2), Matrix(1, 1)};
    expert.lambda << theta.slope[j], theta.intercept[j];
    expert.sigma << theta.variance[j];
    out.experts.push_back(expert);
  }
  out.gating = ConstantGating{weights};
  return out;
}

ScalarMixture from_mixture(const MixtureParams& theta) {
  ScalarMixture out;
  const auto& weights = std::get<ConstantGating>(theta.gating).weights;
  for (int j = 0; j < 2; ++j) {
    const auto& expert = theta.experts[static_cast<std::size_t>(j)];
    out.weight[j] = weights(j);
    out.slope[j] = expert.lambda(0, 0);
    out.intercept[j] = expert.lambda(0, 1);
    out.variance[j] = expert.sigma(0, 0);
  }
  return out;
}

std::array<double, 7> unconstrained(const ScalarMixture& theta) {
  return {std::log(theta.weight[0] / theta.weight[1]),
          theta.slope[0],
          theta.slope[1],
          theta.intercept[0],
          theta.intercept[1],
          std::log(theta.variance[0]),
          std::log(theta.variance[1])};
}

ScalarMixture from_unconstrained(const std::array<double, 7>& c) {
  ScalarMixture out;
  out.weight[0] = sigmoid(c[0]);
  out.weight[1] = sigmoid(-c[0]);
  out.slope = {c[1], c[2]};
  out.intercept = {c[3], c[4]};
  out.variance = {std::exp(c[5]), std::exp(c[6])};
  return out;
}

ExpectationFn grid_expectation(const ToyGrid& grid) {
  auto pairs = std::make_shared<std::vector<WeightedPair>>();
  pairs->reserve(grid.w.size());
  for (std::size_t k = 0; k < grid.w.size(); ++k) {
    Vector ext(2);
    ext << grid.x[k], 1.0;
    Vector child(1);
    child << grid.xp[k];
    pairs->push_back({ext, child, grid.w[k]});
  }
  return [pairs](const MixtureKernel& theta) { return accumulate_weighted_pairs(theta, *pairs); };
}

namespace {

template <typename F>
double integrate_half_line(F f) {
  boost::math::quadrature::exp_sinh<double> integrator;
  return integrator.integrate(f, 0.0, std::numeric_limits<double>::infinity(), 1e-14);
}

struct ScaleMixtureTerms {
  double delta;
  double log_det;
  double dim;
};

ScaleMixtureTerms terms(const ExpertParams& params, const Vector& ancestor, const Vector& child) {
  const Vector mean = params.lambda * extend(ancestor);
  const Eigen::LLT<Matrix> llt(params.sigma);
  const Vector z = llt.matrixL().solve(child - mean);
  const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return {z.squaredNorm(), log_det, static_cast<double>(child.size())};
}

// N(x'; mean, sigma / u) times the Gamma(nu/2, rate nu/2) density of u.
double joint(double u, const ScaleMixtureTerms& t, double nu) {
  if (u <= 0.0) {
    return 0.0;
  }
  const double log_normal = -0.5 * t.dim * std::log(2.0 * std::numbers::pi) - 0.5 * t.log_det +
                            0.5 * t.dim * std::log(u) - 0.5 * u * t.delta;
  const double shape = 0.5 * nu;
  const double log_gamma = shape * std::log(shape) - std::lgamma(shape) + (shape - 1.0) * std::log(u) - shape * u;
  return std::exp(log_normal + log_gamma);
}

}  // namespace

double gaussian_gamma_density(const ExpertParams& params, double nu, const Vector& ancestor, const Vector& child) {
  const auto t = terms(params, ancestor, child);
  return integrate_half_line([&](double u) { return joint(u, t, nu); });
}

double gaussian_gamma_u_mean(const ExpertParams& params, double nu, const Vector& ancestor, const Vector& child) {
  const auto t = terms(params, ancestor, child);
  const double mass = integrate_half_line([&](double u) { return joint(u, t, nu); });
  const double first = integrate_half_line([&](double u) { return u * joint(u, t, nu); });
  return first / mass;
}

double ks_distance(std::vector<double> sample, const std::function<double(double)>& cdf) {
  std::sort(sample.begin(), sample.end());
  const auto n = static_cast<double>(sample.size());
  double out = 0.0;
  for (std::size_t k = 0; k < sample.size(); ++k) {
    const double f = cdf(sample[k]);
    out = std::max({out, static_cast<double>(k + 1) / n - f, f - static_cast<double>(k) / n});
  }
  return out;
}

}  // namespace amoe::selftest
