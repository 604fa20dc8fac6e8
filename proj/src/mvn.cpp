#include "raptor/mvn.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "raptor/errors.hpp"

namespace raptor {

namespace {

constexpr double kSymmetryTolerance = 1e-10;

double log_det_from_chol(const Matrix& l) {
  return 2.0 * l.diagonal().array().log().sum();
}

}  // namespace

Matrix chol(const Matrix& m) {
  if (m.rows() != m.cols()) {
    throw DimensionMismatch("chol: matrix is not square");
  }
  const Eigen::Index d = m.rows();
  Matrix l = Matrix::Zero(d, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    double s = m(j, j);
    for (Eigen::Index k = 0; k < j; ++k) s -= l(j, k) * l(j, k);
    const double pivot = s > 0.0 ? std::sqrt(s) : 0.0;
    if (!(pivot > kPivotTolerance) || !std::isfinite(pivot)) {
      throw NotPositiveDefinite("chol: pivot " + std::to_string(j) +
                                " is not positive (" + std::to_string(s) + ")");
    }
    l(j, j) = pivot;
    for (Eigen::Index i = j + 1; i < d; ++i) {
      double t = m(i, j);
      for (Eigen::Index k = 0; k < j; ++k) t -= l(i, k) * l(j, k);
      l(i, j) = t / pivot;
    }
  }
  return l;
}

CovMatrix::CovMatrix(Matrix entries) : entries_(std::move(entries)) {
  if (entries_.rows() != entries_.cols() || entries_.rows() == 0) {
    throw DimensionMismatch("CovMatrix: expected a non-empty square matrix");
  }
  const double asym = (entries_ - entries_.transpose()).cwiseAbs().maxCoeff();
  if (!(asym <= kSymmetryTolerance)) {
    throw DomainError("CovMatrix: matrix is not symmetric (max |A - A^T| = " +
                      std::to_string(asym) + ")");
  }
  chol_ = raptor::chol(entries_);
  log_det_ = log_det_from_chol(chol_);
}

CovMatrix CovMatrix::identity(Eigen::Index d) {
  return CovMatrix(Matrix::Identity(d, d), Matrix::Identity(d, d), 0.0);
}

CovMatrix CovMatrix::diagonal(const Vector& variances) {
  return CovMatrix(Matrix(variances.asDiagonal()));
}

Vector CovMatrix::whiten(const Vector& v) const {
  require_dim(v.size(), dim(), "CovMatrix::whiten");
  return chol_.triangularView<Eigen::Lower>().solve(v);
}

double CovMatrix::quad_form(const Vector& v) const {
  return whiten(v).squaredNorm();
}

CovMatrix CovMatrix::scaled(double s) const {
  if (!(s > 0.0) || !std::isfinite(s)) {
    throw DomainError("CovMatrix::scaled: scale must be positive");
  }
  return CovMatrix(s * entries_, std::sqrt(s) * chol_,
                   log_det_ + static_cast<double>(dim()) * std::log(s));
}

GaussianParams::GaussianParams(Vector mean_in, CovMatrix cov_in)
    : mean(std::move(mean_in)), cov(std::move(cov_in)) {
  require_dim(mean.size(), cov.dim(), "GaussianParams");
}

double mvn_logpdf(const Vector& x, const Vector& mean, const CovMatrix& cov) {
  require_dim(x.size(), cov.dim(), "mvn_logpdf");
  require_dim(mean.size(), cov.dim(), "mvn_logpdf");
  const double d = static_cast<double>(cov.dim());
  const double log_two_pi = std::log(2.0 * std::numbers::pi);
  return -0.5 * d * log_two_pi - 0.5 * cov.log_det() -
         0.5 * cov.quad_form(x - mean);
}

double mvn_logpdf(const Vector& x, const GaussianParams& p) {
  return mvn_logpdf(x, p.mean, p.cov);
}

Vector mvn_sample(const Vector& mean, const CovMatrix& cov, Rng& rng) {
  require_dim(mean.size(), cov.dim(), "mvn_sample");
  const Vector z = rng.normal_vector(cov.dim());
  return mean + cov.chol().triangularView<Eigen::Lower>() * z;
}

Vector mvn_sample(const GaussianParams& p, Rng& rng) {
  return mvn_sample(p.mean, p.cov, rng);
}

double log_add_exp(double a, double b) {
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = a > b ? a : b;
  const double lo = a > b ? b : a;
  return hi + std::log1p(std::exp(lo - hi));
}

}  // namespace raptor
