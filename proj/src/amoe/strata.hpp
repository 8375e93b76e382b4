#pragma once

#include "amoe/linalg.hpp"
#include "amoe/random.hpp"
#include "amoe/types.hpp"

namespace amoe {

// One expert: child ~ N(lambda * (x, 1), sigma), or the Student-t analogue.
struct ExpertParams {
  Matrix lambda;  // p' x (p + 1)
  Matrix sigma;   // p' x p'

  [[nodiscard]] Index ancestor_dim() const { return lambda.cols() - 1; }
  [[nodiscard]] Index child_dim() const { return lambda.rows(); }
};

struct StratumFamily {
  enum class Kind { kGaussian, kStudentT };

  Kind kind = Kind::kGaussian;
  double nu = 0.0;  // degrees of freedom, Student-t only

  static StratumFamily gaussian() { return {}; }
  static StratumFamily student_t(double nu);

  [[nodiscard]] bool is_student() const { return kind == Kind::kStudentT; }
};

// Conditional expectation of the sufficient statistic of one expert:
// (u x' x'^T, u xb xb^T, u x' xb^T) with xb = (x, 1).
struct ExpertSuffStat {
  Matrix s1;
  Matrix s2;
  Matrix s3;

  static ExpertSuffStat zeros(Index ancestor_dim, Index child_dim);

  ExpertSuffStat& operator+=(const ExpertSuffStat& other);
  ExpertSuffStat& operator*=(double factor);
};

// Validates dimensions and symmetry; positive definiteness is checked when
// the covariance is factorized.
void validate(const ExpertParams& params);
void validate(const StratumFamily& family);

// A stratum with its covariance factorized once, for repeated evaluation.
class Stratum {
 public:
  Stratum(const ExpertParams& params, const StratumFamily& family);

  struct Evaluation {
    double log_density;
    double mahalanobis_sq;
  };

  // `ext_ancestor` is the ancestor with the trailing intercept coordinate.
  [[nodiscard]] Evaluation evaluate(const Vector& ext_ancestor, const Vector& child) const;
  [[nodiscard]] double log_density(const Vector& ext_ancestor, const Vector& child) const {
    return evaluate(ext_ancestor, child).log_density;
  }
  [[nodiscard]] double u_mean(double mahalanobis_sq) const;
  [[nodiscard]] Vector sample(const Vector& ext_ancestor, Rng& rng) const;

  [[nodiscard]] const SpdFactor& factor() const { return factor_; }
  [[nodiscard]] const Matrix& lambda() const { return lambda_; }

 private:
  Matrix lambda_;
  SpdFactor factor_;
  StratumFamily family_;
  double log_norm_ = 0.0;
};

double stratum_log_density(const ExpertParams& params, const StratumFamily& family,
                           const Vector& ancestor, const Vector& child);
Vector stratum_sample(const ExpertParams& params, const StratumFamily& family,
                      const Vector& ancestor, Rng& rng);
double conditional_u_mean(const ExpertParams& params, const StratumFamily& family,
                          const Vector& ancestor, const Vector& child);
ExpertSuffStat stratum_suffstat(const Vector& ancestor, const Vector& child, double u_mean);

// Adds u * S(ext_ancestor, child) to `acc` without temporaries.
void add_suffstat(ExpertSuffStat& acc, const Vector& ext_ancestor, const Vector& child, double u);

}  // namespace amoe
