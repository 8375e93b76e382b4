#pragma once

#include <memory>
#include <string>
#include <vector>

#include "amoe/experts.hpp"
#include "amoe/random.hpp"
#include "amoe/types.hpp"

namespace amoe {

// State-space model: prior kernel q(x, x'), local likelihood g(x', y) and the
// laws used to start filters and single-step studies.
class StateSpaceModel {
 public:
  virtual ~StateSpaceModel() = default;

  [[nodiscard]] virtual std::string id() const = 0;
  [[nodiscard]] virtual Index state_dim() const = 0;
  [[nodiscard]] virtual Index obs_dim() const = 0;

  virtual Vector sample_initial(Rng& rng) const = 0;
  [[nodiscard]] virtual double prior_log_density(const Vector& x, const Vector& xp) const = 0;
  virtual Vector sample_prior(const Vector& x, Rng& rng) const = 0;
  [[nodiscard]] virtual double log_likelihood(const Vector& xp, const Vector& y) const = 0;
  virtual Vector sample_observation(const Vector& x, Rng& rng) const = 0;

  // Exact draws from the filter distribution of the single-step studies.
  virtual Matrix sample_reference_filter(Index n, Rng& rng) const = 0;
  [[nodiscard]] virtual Vector default_observation() const = 0;

  // log L*(x) = log of the integral of g(x', y) q(x, x') over x'.
  [[nodiscard]] virtual bool has_optimal_adjustment() const { return false; }
  [[nodiscard]] virtual double optimal_log_adjustment(const Vector& x, const Vector& y) const;
  // Draws from the normalized optimal kernel.
  [[nodiscard]] virtual bool has_optimal_sampler() const { return false; }
  virtual Vector sample_optimal(const Vector& x, const Vector& y, Rng& rng) const;

  // log of the normalized optimal kernel; requires the optimal adjustment.
  [[nodiscard]] double optimal_log_density(const Vector& x, const Vector& xp, const Vector& y) const;

  // Throws Error(kInvalidObservation) for observations outside the model's range.
  virtual void check_observation(const Vector& y) const;
};

// log l(x, x') = log g(x', y) + log q(x, x').
LogKernelFn filtering_kernel(const StateSpaceModel& model, const Vector& y);

// log L*(xi_i) for every particle of the sample.
std::vector<double> optimal_log_adjustments(const StateSpaceModel& model, const Matrix& particles, const Vector& y);

class PriorProposal final : public ProposalKernel {
 public:
  explicit PriorProposal(const StateSpaceModel& model) : model_(model) {}

  [[nodiscard]] double log_density(const Vector& x, const Vector& xp) const override {
    return model_.prior_log_density(x, xp);
  }
  Vector sample(const Vector& x, Rng& rng, Index* component) const override;
  [[nodiscard]] std::string name() const override { return "prior"; }

 private:
  const StateSpaceModel& model_;
};

class OptimalProposal final : public ProposalKernel {
 public:
  OptimalProposal(const StateSpaceModel& model, Vector y);

  [[nodiscard]] double log_density(const Vector& x, const Vector& xp) const override {
    return model_.optimal_log_density(x, xp, y_);
  }
  Vector sample(const Vector& x, Rng& rng, Index* component) const override;
  [[nodiscard]] std::string name() const override { return "optimal"; }

 private:
  const StateSpaceModel& model_;
  Vector y_;
};

struct LinearGaussianParams {
  Matrix lambda1 = (Matrix(2, 3) << 1, 0, 1, 0, 1, 1).finished();
  Matrix lambda2 = (Matrix(2, 3) << 1, 0, 1, 0, 1, -1).finished();
  Matrix sigma = 0.1 * Matrix::Identity(2, 2);
  Matrix sigma_y = 0.1 * Matrix::Identity(2, 2);
  Matrix filter_sigma = 0.1 * Matrix::Identity(2, 2);
  Vector filter_mode = (Vector(2) << 0, 1).finished();  // modes at +/- this vector
  Vector observation = (Vector(2) << 1, 0).finished();
};

// Closed-form optimal kernel of the linear-Gaussian mixture model.
struct GaussianMixtureDensity {
  Vector weights;
  std::vector<Vector> means;
  Matrix covariance;
  double log_adjustment = 0.0;  // log L*(x)
};

class LinearGaussianModel final : public StateSpaceModel {
 public:
  explicit LinearGaussianModel(LinearGaussianParams params = {});

  [[nodiscard]] const LinearGaussianParams& params() const { return params_; }
  [[nodiscard]] std::string id() const override { return "linear_gaussian"; }
  [[nodiscard]] Index state_dim() const override { return 2; }
  [[nodiscard]] Index obs_dim() const override { return 2; }
  Vector sample_initial(Rng& rng) const override;
  [[nodiscard]] double prior_log_density(const Vector& x, const Vector& xp) const override;
  Vector sample_prior(const Vector& x, Rng& rng) const override;
  [[nodiscard]] double log_likelihood(const Vector& xp, const Vector& y) const override;
  Vector sample_observation(const Vector& x, Rng& rng) const override;
  Matrix sample_reference_filter(Index n, Rng& rng) const override;
  [[nodiscard]] Vector default_observation() const override { return params_.observation; }
  [[nodiscard]] bool has_optimal_adjustment() const override { return true; }
  [[nodiscard]] double optimal_log_adjustment(const Vector& x, const Vector& y) const override;
  [[nodiscard]] bool has_optimal_sampler() const override { return true; }
  Vector sample_optimal(const Vector& x, const Vector& y, Rng& rng) const override;

  [[nodiscard]] GaussianMixtureDensity optimal_kernel(const Vector& x, const Vector& y) const;

 private:
  LinearGaussianParams params_;
  SpdFactor sigma_;
  SpdFactor sigma_y_;
  SpdFactor predictive_;  // sigma + sigma_y
  SpdFactor posterior_;   // (sigma^-1 + sigma_y^-1)^-1
  SpdFactor filter_;
  Matrix sigma_inv_;
  Matrix sigma_y_inv_;
};

GaussianMixtureDensity lg_optimal_kernel(const LinearGaussianModel& model, const Vector& x, const Vector& y);

struct BesselParams {
  double sigma_x = 1.0;    // prior kernel standard deviation per coordinate
  double sigma_y2 = 0.01;  // observation noise variance
  Vector filter_mean = (Vector(2) << 0.7, 0.7).finished();
  double filter_variance = 0.5;
  double observation = 1.0;
};

class BesselModel final : public StateSpaceModel {
 public:
  explicit BesselModel(BesselParams params = {});

  [[nodiscard]] const BesselParams& params() const { return params_; }
  [[nodiscard]] std::string id() const override { return "bessel"; }
  [[nodiscard]] Index state_dim() const override { return 2; }
  [[nodiscard]] Index obs_dim() const override { return 1; }
  Vector sample_initial(Rng& rng) const override;
  [[nodiscard]] double prior_log_density(const Vector& x, const Vector& xp) const override;
  Vector sample_prior(const Vector& x, Rng& rng) const override;
  [[nodiscard]] double log_likelihood(const Vector& xp, const Vector& y) const override;
  Vector sample_observation(const Vector& x, Rng& rng) const override;
  Matrix sample_reference_filter(Index n, Rng& rng) const override;
  [[nodiscard]] Vector default_observation() const override { return Vector::Constant(1, params_.observation); }
  // Reduced to a one-dimensional integral over the radius and evaluated by
  // adaptive Gauss-Kronrod quadrature.
  [[nodiscard]] bool has_optimal_adjustment() const override { return true; }
  [[nodiscard]] double optimal_log_adjustment(const Vector& x, const Vector& y) const override;

 private:
  BesselParams params_;
};

struct TobitParams {
  Matrix a = 0.8 * Matrix::Identity(2, 2);
  Vector b = Vector::Ones(2);
  Matrix sigma_u = 2.0 * Matrix::Identity(2, 2);
  double sigma_v2 = 0.1;
  Vector ancestor_mean = Vector::Ones(2);
  double ancestor_variance = 10.0;
  double observation = 0.0;
};

class TobitModel final : public StateSpaceModel {
 public:
  explicit TobitModel(TobitParams params = {});

  [[nodiscard]] const TobitParams& params() const { return params_; }
  [[nodiscard]] std::string id() const override { return "tobit"; }
  [[nodiscard]] Index state_dim() const override { return params_.a.rows(); }
  [[nodiscard]] Index obs_dim() const override { return 1; }
  Vector sample_initial(Rng& rng) const override;
  [[nodiscard]] double prior_log_density(const Vector& x, const Vector& xp) const override;
  Vector sample_prior(const Vector& x, Rng& rng) const override;
  [[nodiscard]] double log_likelihood(const Vector& xp, const Vector& y) const override;
  Vector sample_observation(const Vector& x, Rng& rng) const override;
  Matrix sample_reference_filter(Index n, Rng& rng) const override;
  [[nodiscard]] Vector default_observation() const override { return Vector::Constant(1, params_.observation); }
  [[nodiscard]] bool has_optimal_adjustment() const override { return true; }
  [[nodiscard]] double optimal_log_adjustment(const Vector& x, const Vector& y) const override;
  [[nodiscard]] bool has_optimal_sampler() const override { return true; }
  Vector sample_optimal(const Vector& x, const Vector& y, Rng& rng) const override;
  void check_observation(const Vector& y) const override;

 private:
  TobitParams params_;
  SpdFactor sigma_u_;
  double obs_variance_ = 0.0;  // b' sigma_u b + sigma_v2
  Vector gain_;                // sigma_u b / obs_variance
  SpdFactor conditional_;      // sigma_u - sigma_u b b' sigma_u / obs_variance
};

double bessel_loglik(const BesselModel& model, const Vector& child, double y);
double tobit_loglik(const TobitModel& model, const Vector& child, double y);

// log Phi(z), accurate in the far lower tail.
double log_normal_cdf(double z);
double gaussian_log_density(const Vector& x, const Vector& mean, const SpdFactor& cov);

std::unique_ptr<StateSpaceModel> make_default_model(const std::string& id);

}  // namespace amoe
