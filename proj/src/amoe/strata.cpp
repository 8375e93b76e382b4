#include "amoe/strata.hpp"

#include <cmath>
#include <numbers>

#include "amoe/errors.hpp"

namespace amoe {

StratumFamily StratumFamily::student_t(double nu) {
  StratumFamily family{Kind::kStudentT, nu};
  validate(family);
  return family;
}

ExpertSuffStat ExpertSuffStat::zeros(Index ancestor_dim, Index child_dim) {
  return {Matrix::Zero(child_dim, child_dim), Matrix::Zero(ancestor_dim + 1, ancestor_dim + 1),
          Matrix::Zero(child_dim, ancestor_dim + 1)};
}

ExpertSuffStat& ExpertSuffStat::operator+=(const ExpertSuffStat& other) {
  s1 += other.s1;
  s2 += other.s2;
  s3 += other.s3;
  return *this;
}

ExpertSuffStat& ExpertSuffStat::operator*=(double factor) {
  s1 *= factor;
  s2 *= factor;
  s3 *= factor;
  return *this;
}

void validate(const ExpertParams& params) {
  require(params.lambda.rows() >= 1 && params.lambda.cols() >= 1, "lambda must be non-empty");
  require(params.sigma.rows() == params.lambda.rows() && params.sigma.cols() == params.lambda.rows(),
          "sigma must be p' x p' with p' the number of rows of lambda");
  require(params.lambda.allFinite() && params.sigma.allFinite(), "expert parameters must be finite");
  const double scale = params.sigma.cwiseAbs().maxCoeff();
  require((params.sigma - params.sigma.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * (1.0 + scale),
          "sigma must be symmetric");
}

void validate(const StratumFamily& family) {
  if (family.is_student()) {
    require(family.nu > 2.0 && std::isfinite(family.nu), "Student-t degrees of freedom must exceed 2");
  }
}

Stratum::Stratum(const ExpertParams& params, const StratumFamily& family)
    : lambda_(params.lambda), family_(family) {
  validate(params);
  validate(family);
  factor_ = SpdFactor(params.sigma);
  const auto p = static_cast<double>(params.child_dim());
  if (family.is_student()) {
    const double nu = family.nu;
    log_norm_ = std::lgamma(0.5 * (nu + p)) - std::lgamma(0.5 * nu) -
                0.5 * p * std::log(nu * std::numbers::pi) - 0.5 * factor_.log_det();
  } else {
    log_norm_ = -0.5 * p * std::log(2.0 * std::numbers::pi) - 0.5 * factor_.log_det();
  }
}

Stratum::Evaluation Stratum::evaluate(const Vector& ext_ancestor, const Vector& child) const {
  const double m2 = factor_.mahalanobis_sq(child - lambda_ * ext_ancestor);
  if (family_.is_student()) {
    const double nu = family_.nu;
    const auto p = static_cast<double>(child.size());
    return {log_norm_ - 0.5 * (nu + p) * std::log1p(m2 / nu), m2};
  }
  return {log_norm_ - 0.5 * m2, m2};
}

double Stratum::u_mean(double mahalanobis_sq) const {
  if (!family_.is_student()) {
    return 1.0;
  }
  const auto p = static_cast<double>(lambda_.rows());
  return (family_.nu + p) / (family_.nu + mahalanobis_sq);
}

Vector Stratum::sample(const Vector& ext_ancestor, Rng& rng) const {
  Vector z = rng.normal_vector(lambda_.rows());
  if (family_.is_student()) {
    const double u = rng.gamma(0.5 * family_.nu, 0.5 * family_.nu);
    z /= std::sqrt(u);
  }
  return lambda_ * ext_ancestor + factor_.colour(z);
}

double stratum_log_density(const ExpertParams& params, const StratumFamily& family,
                           const Vector& ancestor, const Vector& child) {
  require(ancestor.size() == params.ancestor_dim() && child.size() == params.child_dim(),
          "ancestor/child dimensions do not match the expert");
  return Stratum(params, family).log_density(extend(ancestor), child);
}

Vector stratum_sample(const ExpertParams& params, const StratumFamily& family,
                      const Vector& ancestor, Rng& rng) {
  require(ancestor.size() == params.ancestor_dim(), "ancestor dimension does not match the expert");
  return Stratum(params, family).sample(extend(ancestor), rng);
}

double conditional_u_mean(const ExpertParams& params, const StratumFamily& family,
                          const Vector& ancestor, const Vector& child) {
  if (!family.is_student()) {
    return 1.0;
  }
  const Stratum stratum(params, family);
  return stratum.u_mean(stratum.evaluate(extend(ancestor), child).mahalanobis_sq);
}

ExpertSuffStat stratum_suffstat(const Vector& ancestor, const Vector& child, double u_mean) {
  require(u_mean > 0.0, "u_mean must be positive");
  auto out = ExpertSuffStat::zeros(ancestor.size(), child.size());
  add_suffstat(out, extend(ancestor), child, u_mean);
  return out;
}

void add_suffstat(ExpertSuffStat& acc, const Vector& ext_ancestor, const Vector& child, double u) {
  acc.s1.noalias() += u * child * child.transpose();
  acc.s2.noalias() += u * ext_ancestor * ext_ancestor.transpose();
  acc.s3.noalias() += u * child * ext_ancestor.transpose();
}

}  // namespace amoe
