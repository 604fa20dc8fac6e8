#ifndef RAPTOR_DIAGNOSTICS_HPP
#define RAPTOR_DIAGNOSTICS_HPP

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "raptor/mvn.hpp"

namespace raptor {

// Empirical CDF of a fixed sample, F_n(z) = #{t : X_t <= z componentwise} / n.
// Small samples are scanned directly. Large ones keep, per coordinate, the
// sorted order and bitsets of the sample sets below evenly spaced ranks,
// so an evaluation costs a few bitset intersections.
class Ecdf {
 public:
  // Throws EmptySample for an empty sample.
  explicit Ecdf(const std::vector<Vector>& samples);
  Ecdf(const std::vector<Vector>& samples, std::size_t first_n);

  double operator()(const Vector& z) const;
  std::size_t size() const { return n_; }
  Eigen::Index dim() const { return coords_.rows(); }

 private:
  double scan(const Vector& z) const;
  double indexed(const Vector& z) const;

  std::size_t n_ = 0;
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> coords_;

  // Index for large samples.
  std::size_t stride_ = 0;
  std::size_t words_ = 0;
  std::size_t blocks_ = 0;
  std::vector<std::vector<double>> sorted_;
  std::vector<std::vector<std::uint32_t>> order_;
  // prefix_[j][b * words_ ...]: samples of rank < b * stride_ in coordinate j.
  std::vector<std::vector<std::uint64_t>> prefix_;
};

double ecdf_eval(const std::vector<Vector>& samples, const Vector& z);

using CdfFunction = std::function<double(const Vector&)>;

// (1/M) sum_j |F_n(y_j) - F(y_j)|^2. Throws MissingCdf if `cdf` is empty.
double dn_hat(const std::vector<Vector>& samples, const std::vector<Vector>& oracle_draws,
              const CdfFunction& cdf);
// Same, with F(y_j) precomputed once for a shared oracle set.
double dn_hat(const Ecdf& fn, const std::vector<Vector>& oracle_draws,
              std::span<const double> oracle_cdf);

// Arithmetic mean of replicate values. Throws EmptySample when empty.
double dn_bar(std::span<const double> replicate_values);

struct MseBias {
  Vector mse;
  Vector bias;
};

// Per coordinate: mse = mean (m_b - truth)^2, bias = mean (m_b - truth).
MseBias mse_bias(const std::vector<Vector>& replicate_means, const Vector& truth);

struct RunSummary {
  double acceptance_rate = 0.0;
  Vector coord_means;
  Vector mse;
  Vector bias;
  double dn_hat = 0.0;
};

}  // namespace raptor

#endif  // RAPTOR_DIAGNOSTICS_HPP
