#ifndef RAPTOR_MVN_HPP
#define RAPTOR_MVN_HPP

#include <Eigen/Dense>

#include "raptor/rng.hpp"

namespace raptor {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Diagonal entries of the Cholesky factor at or below this value are
// treated as a failed factorization.
inline constexpr double kPivotTolerance = 1e-12;

// Lower-triangular L with L * L^T == m. Throws NotPositiveDefinite when a
// diagonal factor entry is <= kPivotTolerance or not finite.
Matrix chol(const Matrix& m);

// Symmetric positive definite covariance with its Cholesky factor cached.
// Immutable after construction.
class CovMatrix {
 public:
  // Throws DimensionMismatch for non-square input, DomainError when the
  // matrix is not symmetric within 1e-10, NotPositiveDefinite when the
  // factorization fails.
  explicit CovMatrix(Matrix entries);

  static CovMatrix identity(Eigen::Index d);
  static CovMatrix diagonal(const Vector& variances);

  Eigen::Index dim() const { return entries_.rows(); }
  const Matrix& matrix() const { return entries_; }
  const Matrix& chol() const { return chol_; }
  double log_det() const { return log_det_; }

  // L^{-1} v.
  Vector whiten(const Vector& v) const;
  // v^T Sigma^{-1} v via a triangular solve.
  double quad_form(const Vector& v) const;

  // s * Sigma, reusing the factor (sqrt(s) * L). s must be positive.
  CovMatrix scaled(double s) const;

 private:
  CovMatrix(Matrix entries, Matrix chol, double log_det)
      : entries_(std::move(entries)), chol_(std::move(chol)), log_det_(log_det) {}

  Matrix entries_;
  Matrix chol_;
  double log_det_ = 0.0;
};

struct GaussianParams {
  GaussianParams(Vector mean_in, CovMatrix cov_in);

  Vector mean;
  CovMatrix cov;
};

double mvn_logpdf(const Vector& x, const Vector& mean, const CovMatrix& cov);
double mvn_logpdf(const Vector& x, const GaussianParams& p);

// mean + L z with z standard normal.
Vector mvn_sample(const Vector& mean, const CovMatrix& cov, Rng& rng);
Vector mvn_sample(const GaussianParams& p, Rng& rng);

// log(exp(a) + exp(b)) without overflow; handles -inf operands.
double log_add_exp(double a, double b);

}  // namespace raptor

#endif  // RAPTOR_MVN_HPP
