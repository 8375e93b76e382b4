#include "amoe/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "amoe/errors.hpp"
#include "amoe/warnings.hpp"

namespace amoe {
namespace {

bool try_factor(const Matrix& m, Matrix& lower) {
  if (!m.allFinite()) {
    return false;
  }
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) {
    return false;
  }
  lower = llt.matrixL();
  return (lower.diagonal().array() > 0.0).all();
}

}  // namespace

SpdFactor::SpdFactor(const Matrix& sigma) {
  if (sigma.rows() != sigma.cols() || sigma.rows() == 0) {
    throw Error(ErrorCode::kInvalidArgument, "covariance must be a non-empty square matrix");
  }
  matrix_ = symmetrize(sigma);
  if (!try_factor(matrix_, lower_)) {
    const auto dim = static_cast<double>(matrix_.rows());
    double scale = matrix_.trace() / dim;
    if (!(scale > 0.0) || !std::isfinite(scale)) {
      scale = 1.0;
    }
    matrix_.diagonal().array() += 1e-9 * scale;
    jittered_ = true;
    note_warning(Warning::kCovarianceJitter);
    if (!try_factor(matrix_, lower_)) {
      throw Error(ErrorCode::kCholeskyFailure, "covariance is not positive definite after jitter");
    }
  }
  log_det_ = 2.0 * lower_.diagonal().array().log().sum();
}

double SpdFactor::mahalanobis_sq(const Vector& r) const {
  return lower_.triangularView<Eigen::Lower>().solve(r).squaredNorm();
}

Vector SpdFactor::colour(const Vector& z) const {
  return lower_.triangularView<Eigen::Lower>() * z;
}

Matrix SpdFactor::inverse() const {
  const Matrix id = Matrix::Identity(dim(), dim());
  const Matrix li = lower_.triangularView<Eigen::Lower>().solve(id);
  return li.transpose() * li;
}

Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

Vector extend(const Vector& x) {
  Vector out(x.size() + 1);
  out.head(x.size()) = x;
  out(x.size()) = 1.0;
  return out;
}

double log_sum_exp(std::span<const double> values) {
  double peak = -std::numeric_limits<double>::infinity();
  for (double v : values) {
    peak = std::max(peak, v);
  }
  if (!std::isfinite(peak)) {
    return peak;
  }
  double sum = 0.0;
  for (double v : values) {
    sum += std::exp(v - peak);
  }
  return peak + std::log(sum);
}

Matrix right_solve_psd(const Matrix& a, const Matrix& s) {
  const Matrix sym = symmetrize(s);
  Eigen::LLT<Matrix> llt(sym);
  if (llt.info() == Eigen::Success) {
    const auto diag = llt.matrixL().toDenseMatrix().diagonal();
    const double lo = diag.minCoeff();
    const double hi = diag.maxCoeff();
    if (lo > 0.0 && (lo / hi) * (lo / hi) > 1e-13) {
      return llt.solve(a.transpose()).transpose();
    }
  }
  note_warning(Warning::kPseudoInverse);
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(sym);
  return (cod.pseudoInverse() * a.transpose()).transpose();
}

}  // namespace amoe
