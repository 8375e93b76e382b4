#include "amoe/models.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/bessel.hpp>
#include <boost/math/special_functions/erf.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "amoe/errors.hpp"
#include "amoe/linalg.hpp"

namespace amoe {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
const double kLogTwoPi = std::log(2.0 * std::numbers::pi);

double log_normal_pdf(double x, double mean, double variance) {
  const double r = x - mean;
  return -0.5 * (kLogTwoPi + std::log(variance)) - 0.5 * r * r / variance;
}

// log(I_0(z) e^{-z}) for z >= 0.
double log_bessel_i0_scaled(double z) {
  if (z < 500.0) {
    return std::log(boost::math::cyl_bessel_i(0, z)) - z;
  }
  const double inv = 1.0 / z;
  return -0.5 * std::log(2.0 * std::numbers::pi * z) + std::log1p(inv / 8.0 + 9.0 * inv * inv / 128.0);
}

double scalar_observation(const Vector& y) {
  require(y.size() == 1, "observation must be scalar");
  return y(0);
}

}  // namespace

double log_normal_cdf(double z) {
  if (z > -30.0) {
    return std::log(0.5 * std::erfc(-z / std::numbers::sqrt2));
  }
  const double z2 = z * z;
  return -0.5 * z2 - std::log(-z) - 0.5 * kLogTwoPi + std::log1p(-1.0 / z2 + 3.0 / (z2 * z2));
}

double gaussian_log_density(const Vector& x, const Vector& mean, const SpdFactor& cov) {
  const auto p = static_cast<double>(x.size());
  return -0.5 * (p * kLogTwoPi + cov.log_det()) - 0.5 * cov.mahalanobis_sq(x - mean);
}

double StateSpaceModel::optimal_log_adjustment(const Vector&, const Vector&) const {
  throw Error(ErrorCode::kInvalidArgument, "model " + id() + " has no optimal adjustment");
}

Vector StateSpaceModel::sample_optimal(const Vector&, const Vector&, Rng&) const {
  throw Error(ErrorCode::kInvalidArgument, "model " + id() + " has no optimal-kernel sampler");
}

double StateSpaceModel::optimal_log_density(const Vector& x, const Vector& xp, const Vector& y) const {
  const double log_l = log_likelihood(xp, y) + prior_log_density(x, xp);
  if (log_l == kNegInf) {
    return kNegInf;
  }
  return log_l - optimal_log_adjustment(x, y);
}

void StateSpaceModel::check_observation(const Vector& y) const {
  if (y.size() != obs_dim() || !y.allFinite()) {
    throw Error(ErrorCode::kInvalidObservation, "observation has the wrong dimension or is not finite");
  }
}

LogKernelFn filtering_kernel(const StateSpaceModel& model, const Vector& y) {
  model.check_observation(y);
  return [&model, y](const Vector& x, const Vector& xp) {
    const double g = model.log_likelihood(xp, y);
    if (g == kNegInf) {
      return kNegInf;
    }
    return g + model.prior_log_density(x, xp);
  };
}

std::vector<double> optimal_log_adjustments(const StateSpaceModel& model, const Matrix& particles, const Vector& y) {
  std::vector<double> out(static_cast<std::size_t>(particles.cols()));
  for (Index i = 0; i < particles.cols(); ++i) {
    out[static_cast<std::size_t>(i)] = model.optimal_log_adjustment(particles.col(i), y);
  }
  return out;
}

Vector PriorProposal::sample(const Vector& x, Rng& rng, Index* component) const {
  if (component != nullptr) {
    *component = -1;
  }
  return model_.sample_prior(x, rng);
}

OptimalProposal::OptimalProposal(const StateSpaceModel& model, Vector y) : model_(model), y_(std::move(y)) {
  require(model.has_optimal_sampler() && model.has_optimal_adjustment(),
          "model " + model.id() + " has no closed-form optimal kernel");
  model.check_observation(y_);
}

Vector OptimalProposal::sample(const Vector& x, Rng& rng, Index* component) const {
  if (component != nullptr) {
    *component = -1;
  }
  return model_.sample_optimal(x, y_, rng);
}

// Linear-Gaussian mixture ----------------------------------------------------

LinearGaussianModel::LinearGaussianModel(LinearGaussianParams params) : params_(std::move(params)) {
  require(params_.lambda1.rows() == 2 && params_.lambda1.cols() == 3 && params_.lambda2.rows() == 2 &&
              params_.lambda2.cols() == 3,
          "regression matrices must be 2 x 3");
  sigma_ = SpdFactor(params_.sigma);
  sigma_y_ = SpdFactor(params_.sigma_y);
  predictive_ = SpdFactor(params_.sigma + params_.sigma_y);
  sigma_inv_ = sigma_.inverse();
  sigma_y_inv_ = sigma_y_.inverse();
  posterior_ = SpdFactor(Matrix((sigma_inv_ + sigma_y_inv_).inverse()));
  filter_ = SpdFactor(params_.filter_sigma);
}

Vector LinearGaussianModel::sample_initial(Rng& rng) const {
  const double sign = rng.uniform() < 0.5 ? 1.0 : -1.0;
  return sign * params_.filter_mode + filter_.colour(rng.normal_vector(2));
}

double LinearGaussianModel::prior_log_density(const Vector& x, const Vector& xp) const {
  const Vector ext = extend(x);
  const double a = gaussian_log_density(xp, params_.lambda1 * ext, sigma_);
  const double b = gaussian_log_density(xp, params_.lambda2 * ext, sigma_);
  const double peak = std::max(a, b);
  return peak + std::log(0.5 * std::exp(a - peak) + 0.5 * std::exp(b - peak));
}

Vector LinearGaussianModel::sample_prior(const Vector& x, Rng& rng) const {
  const Matrix& lambda = rng.uniform() < 0.5 ? params_.lambda1 : params_.lambda2;
  return lambda * extend(x) + sigma_.colour(rng.normal_vector(2));
}

double LinearGaussianModel::log_likelihood(const Vector& xp, const Vector& y) const {
  return gaussian_log_density(y, xp, sigma_y_);
}

Vector LinearGaussianModel::sample_observation(const Vector& x, Rng& rng) const {
  return x + sigma_y_.colour(rng.normal_vector(2));
}

Matrix LinearGaussianModel::sample_reference_filter(Index n, Rng& rng) const {
  Matrix out(2, n);
  for (Index i = 0; i < n; ++i) {
    out.col(i) = sample_initial(rng);
  }
  return out;
}

GaussianMixtureDensity LinearGaussianModel::optimal_kernel(const Vector& x, const Vector& y) const {
  check_observation(y);
  const Vector ext = extend(x);
  GaussianMixtureDensity out;
  out.covariance = posterior_.matrix();
  Vector logs(2);
  int j = 0;
  for (const Matrix* lambda : {&params_.lambda1, &params_.lambda2}) {
    const Vector prior_mean = *lambda * ext;
    out.means.push_back(posterior_.matrix() * (sigma_inv_ * prior_mean + sigma_y_inv_ * y));
    logs(j++) = std::log(0.5) + gaussian_log_density(y, prior_mean, predictive_);
  }
  out.log_adjustment = log_sum_exp({logs.data(), 2});
  out.weights = (logs.array() - out.log_adjustment).exp();
  return out;
}

double LinearGaussianModel::optimal_log_adjustment(const Vector& x, const Vector& y) const {
  return optimal_kernel(x, y).log_adjustment;
}

Vector LinearGaussianModel::sample_optimal(const Vector& x, const Vector& y, Rng& rng) const {
  const auto kernel = optimal_kernel(x, y);
  const std::size_t j = rng.uniform() < kernel.weights(0) ? 0 : 1;
  return kernel.means[j] + posterior_.colour(rng.normal_vector(2));
}

GaussianMixtureDensity lg_optimal_kernel(const LinearGaussianModel& model, const Vector& x, const Vector& y) {
  return model.optimal_kernel(x, y);
}

// Bessel (range-only random walk) ----------------------------------------------

BesselModel::BesselModel(BesselParams params) : params_(std::move(params)) {
  require(params_.sigma_x > 0.0 && params_.sigma_y2 > 0.0 && params_.filter_variance > 0.0,
          "Bessel model variances must be positive");
  require(params_.filter_mean.size() == 2, "Bessel model is two-dimensional");
}

Vector BesselModel::sample_initial(Rng& rng) const {
  return params_.filter_mean + std::sqrt(params_.filter_variance) * rng.normal_vector(2);
}

double BesselModel::prior_log_density(const Vector& x, const Vector& xp) const {
  const double s2 = params_.sigma_x * params_.sigma_x;
  return -kLogTwoPi - std::log(s2) - 0.5 * (xp - x).squaredNorm() / s2;
}

Vector BesselModel::sample_prior(const Vector& x, Rng& rng) const {
  return x + params_.sigma_x * rng.normal_vector(2);
}

double BesselModel::log_likelihood(const Vector& xp, const Vector& y) const {
  return log_normal_pdf(scalar_observation(y), xp.norm(), params_.sigma_y2);
}

Vector BesselModel::sample_observation(const Vector& x, Rng& rng) const {
  return Vector::Constant(1, x.norm() + std::sqrt(params_.sigma_y2) * rng.normal());
}

Matrix BesselModel::sample_reference_filter(Index n, Rng& rng) const {
  Matrix out(2, n);
  for (Index i = 0; i < n; ++i) {
    out.col(i) = sample_initial(rng);
  }
  return out;
}

double BesselModel::optimal_log_adjustment(const Vector& x, const Vector& y) const {
  // L*(x) = int_0^inf N(y; r, sy2) (r / s2) exp(-(r^2 + a^2) / (2 s2)) I_0(r a / s2) dr.
  const double obs = scalar_observation(y);
  const double s2 = params_.sigma_x * params_.sigma_x;
  const double a = x.norm();
  const double sy = std::sqrt(params_.sigma_y2);
  auto log_integrand = [&](double r) {
    if (r <= 0.0) {
      return kNegInf;
    }
    const double z = r * a / s2;
    return log_normal_pdf(obs, r, params_.sigma_y2) + std::log(r / s2) - 0.5 * (r - a) * (r - a) / s2 +
           log_bessel_i0_scaled(z);
  };
  const double lo = std::max(0.0, obs - 14.0 * sy);
  const double hi = std::max(obs, 0.0) + 14.0 * sy;
  double shift = kNegInf;
  for (int k = 0; k <= 64; ++k) {
    shift = std::max(shift, log_integrand(lo + (hi - lo) * k / 64.0));
  }
  if (!std::isfinite(shift)) {
    return kNegInf;
  }
  auto f = [&](double r) {
    const double v = log_integrand(r);
    return v == kNegInf ? 0.0 : std::exp(v - shift);
  };
  const double value = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, lo, hi, 15, 1e-13);
  return shift + std::log(value);
}

double bessel_loglik(const BesselModel& model, const Vector& child, double y) {
  return model.log_likelihood(child, Vector::Constant(1, y));
}

// Tobit -------------------------------------------------------------------------

TobitModel::TobitModel(TobitParams params) : params_(std::move(params)) {
  const Index p = params_.a.rows();
  require(params_.a.cols() == p && params_.b.size() == p && params_.sigma_u.rows() == p &&
              params_.ancestor_mean.size() == p,
          "tobit model dimensions are inconsistent");
  require(params_.sigma_v2 > 0.0 && params_.ancestor_variance > 0.0, "tobit variances must be positive");
  sigma_u_ = SpdFactor(params_.sigma_u);
  const Vector sb = params_.sigma_u * params_.b;
  obs_variance_ = params_.b.dot(sb) + params_.sigma_v2;
  gain_ = sb / obs_variance_;
  conditional_ = SpdFactor(Matrix(params_.sigma_u - sb * sb.transpose() / obs_variance_));
}

void TobitModel::check_observation(const Vector& y) const {
  StateSpaceModel::check_observation(y);
  if (y(0) < 0.0) {
    throw Error(ErrorCode::kInvalidObservation, "tobit observations are censored at zero and cannot be negative");
  }
}

Vector TobitModel::sample_initial(Rng& rng) const {
  return params_.ancestor_mean + std::sqrt(params_.ancestor_variance) * rng.normal_vector(state_dim());
}

double TobitModel::prior_log_density(const Vector& x, const Vector& xp) const {
  return gaussian_log_density(xp, params_.a * x, sigma_u_);
}

Vector TobitModel::sample_prior(const Vector& x, Rng& rng) const {
  return params_.a * x + sigma_u_.colour(rng.normal_vector(state_dim()));
}

double TobitModel::log_likelihood(const Vector& xp, const Vector& y) const {
  check_observation(y);
  const double obs = y(0);
  const double mean = params_.b.dot(xp);
  if (obs > 0.0) {
    return log_normal_pdf(obs, mean, params_.sigma_v2);
  }
  return log_normal_cdf(-mean / std::sqrt(params_.sigma_v2));
}

Vector TobitModel::sample_observation(const Vector& x, Rng& rng) const {
  const double z = params_.b.dot(x) + std::sqrt(params_.sigma_v2) * rng.normal();
  return Vector::Constant(1, std::max(z, 0.0));
}

Matrix TobitModel::sample_reference_filter(Index n, Rng& rng) const {
  Matrix out(state_dim(), n);
  for (Index i = 0; i < n; ++i) {
    out.col(i) = sample_initial(rng);
  }
  return out;
}

double TobitModel::optimal_log_adjustment(const Vector& x, const Vector& y) const {
  check_observation(y);
  const double mean = params_.b.dot(params_.a * x);
  if (y(0) > 0.0) {
    return log_normal_pdf(y(0), mean, obs_variance_);
  }
  return log_normal_cdf(-mean / std::sqrt(obs_variance_));
}

Vector TobitModel::sample_optimal(const Vector& x, const Vector& y, Rng& rng) const {
  check_observation(y);
  // z = b'x' + v given the observation, then x' given z.
  const Vector prior_mean = params_.a * x;
  const double mean = params_.b.dot(prior_mean);
  const double sd = std::sqrt(obs_variance_);
  double z = y(0);
  if (z <= 0.0) {
    // z ~ N(mean, sd^2) truncated to (-inf, 0] by inversion.
    const double upper = 0.5 * std::erfc(mean / (sd * std::numbers::sqrt2));
    const double u = rng.uniform() * upper;
    if (u > std::numeric_limits<double>::min()) {
      z = std::min(mean - sd * std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * u), 0.0);
    } else {
      z = 0.0;
    }
  }
  return prior_mean + gain_ * (z - mean) + conditional_.colour(rng.normal_vector(state_dim()));
}

double tobit_loglik(const TobitModel& model, const Vector& child, double y) {
  return model.log_likelihood(child, Vector::Constant(1, y));
}

std::unique_ptr<StateSpaceModel> make_default_model(const std::string& id) {
  if (id == "linear_gaussian") {
    return std::make_unique<LinearGaussianModel>();
  }
  if (id == "bessel") {
    return std::make_unique<BesselModel>();
  }
  if (id == "tobit") {
    return std::make_unique<TobitModel>();
  }
  throw Error(ErrorCode::kConfig, "unknown model id '" + id + "'");
}

}  // namespace amoe
