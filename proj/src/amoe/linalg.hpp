#pragma once

#include <span>

#include "amoe/types.hpp"

namespace amoe {

// Cholesky factorization of a covariance matrix. On the first failure the
// diagonal is inflated by 1e-9 * trace / dim and the factorization retried;
// a second failure throws Error(kCholeskyFailure).
class SpdFactor {
 public:
  SpdFactor() = default;
  explicit SpdFactor(const Matrix& sigma);

  [[nodiscard]] Index dim() const { return lower_.rows(); }
  [[nodiscard]] const Matrix& lower() const { return lower_; }
  [[nodiscard]] const Matrix& matrix() const { return matrix_; }
  [[nodiscard]] double log_det() const { return log_det_; }
  [[nodiscard]] bool jittered() const { return jittered_; }

  // Squared Mahalanobis norm r' Sigma^{-1} r.
  [[nodiscard]] double mahalanobis_sq(const Vector& r) const;
  // Returns L z, a draw from N(0, Sigma) when z is standard normal.
  [[nodiscard]] Vector colour(const Vector& z) const;
  [[nodiscard]] Matrix inverse() const;

 private:
  Matrix matrix_;
  Matrix lower_;
  double log_det_ = 0.0;
  bool jittered_ = false;
};

[[nodiscard]] Matrix symmetrize(const Matrix& m);

// (x, 1): the ancestor augmented with an intercept coordinate.
[[nodiscard]] Vector extend(const Vector& x);

[[nodiscard]] double log_sum_exp(std::span<const double> values);

// Solves X s = a for X, i.e. X = a s^{-1}, with s symmetric positive
// semi-definite. Falls back to the pseudo-inverse when s is singular or
// ill-conditioned and records a kPseudoInverse warning.
[[nodiscard]] Matrix right_solve_psd(const Matrix& a, const Matrix& s);

}  // namespace amoe
