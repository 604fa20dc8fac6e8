#include "raptor/diagnostics.hpp"

#include <algorithm>
#include <bit>
#include <numeric>

#include "raptor/errors.hpp"

namespace raptor {

Ecdf::Ecdf(const std::vector<Vector>& samples) : Ecdf(samples, samples.size()) {}

Ecdf::Ecdf(const std::vector<Vector>& samples, std::size_t first_n)
    : n_(std::min(first_n, samples.size())) {
  if (n_ == 0) throw EmptySample("ecdf: empty sample");
  const Eigen::Index d = samples.front().size();
  coords_.resize(d, static_cast<Eigen::Index>(n_));
  for (std::size_t t = 0; t < n_; ++t) {
    require_dim(samples[t].size(), d, "ecdf sample");
    coords_.col(static_cast<Eigen::Index>(t)) = samples[t];
  }
  constexpr std::size_t kIndexFrom = 4096;
  constexpr std::size_t kBlocks = 128;
  if (n_ < kIndexFrom) return;
  stride_ = (n_ + kBlocks - 1) / kBlocks;
  blocks_ = n_ / stride_;
  words_ = (n_ + 63) / 64;
  sorted_.resize(static_cast<std::size_t>(d));
  order_.resize(static_cast<std::size_t>(d));
  prefix_.resize(static_cast<std::size_t>(d));
  for (Eigen::Index j = 0; j < d; ++j) {
    const auto ju = static_cast<std::size_t>(j);
    const double* row = coords_.row(j).data();
    auto& order = order_[ju];
    order.resize(n_);
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(),
                     [row](std::uint32_t a, std::uint32_t b) { return row[a] < row[b]; });
    auto& sorted = sorted_[ju];
    sorted.resize(n_);
    for (std::size_t r = 0; r < n_; ++r) sorted[r] = row[order[r]];
    auto& prefix = prefix_[ju];
    prefix.assign((blocks_ + 1) * words_, 0);
    for (std::size_t b = 1; b <= blocks_; ++b) {
      std::uint64_t* cur = prefix.data() + b * words_;
      std::copy_n(cur - words_, words_, cur);
      for (std::size_t r = (b - 1) * stride_; r < b * stride_; ++r) {
        cur[order[r] >> 6] |= std::uint64_t{1} << (order[r] & 63);
      }
    }
  }
}

double Ecdf::operator()(const Vector& z) const {
  require_dim(z.size(), dim(), "ecdf_eval");
  return stride_ > 0 ? indexed(z) : scan(z);
}

double Ecdf::indexed(const Vector& z) const {
  thread_local std::vector<std::uint64_t> acc;
  thread_local std::vector<std::uint64_t> tmp;
  acc.resize(words_);
  tmp.resize(words_);
  const auto d = static_cast<std::size_t>(dim());
  for (std::size_t j = 0; j < d; ++j) {
    const auto& sorted = sorted_[j];
    // Rank count: samples with value <= z_j.
    const auto c = static_cast<std::size_t>(
        std::upper_bound(sorted.begin(), sorted.end(), z[static_cast<Eigen::Index>(j)]) -
        sorted.begin());
    if (c == 0) return 0.0;
    const std::size_t b = std::min(c / stride_, blocks_);
    const std::uint64_t* base = prefix_[j].data() + b * words_;
    std::vector<std::uint64_t>& dst = j == 0 ? acc : tmp;
    std::copy_n(base, words_, dst.data());
    const auto& order = order_[j];
    for (std::size_t r = b * stride_; r < c; ++r) {
      dst[order[r] >> 6] |= std::uint64_t{1} << (order[r] & 63);
    }
    if (j > 0) {
      for (std::size_t w = 0; w < words_; ++w) acc[w] &= tmp[w];
    }
  }
  std::size_t count = 0;
  for (std::size_t w = 0; w < words_; ++w) count += static_cast<std::size_t>(std::popcount(acc[w]));
  return static_cast<double>(count) / static_cast<double>(n_);
}

double Ecdf::scan(const Vector& z) const {
  thread_local std::vector<unsigned char> buffer;
  buffer.resize(n_);
  unsigned char* mask = buffer.data();
  const std::size_t n = n_;
  {
    const double* row = coords_.row(0).data();
    const double zj = z[0];
    for (std::size_t t = 0; t < n; ++t) mask[t] = row[t] <= zj;
  }
  for (Eigen::Index j = 1; j < coords_.rows(); ++j) {
    const double* row = coords_.row(j).data();
    const double zj = z[j];
    for (std::size_t t = 0; t < n; ++t) mask[t] &= row[t] <= zj;
  }
  std::size_t count = 0;
  for (std::size_t t = 0; t < n; ++t) count += mask[t];
  return static_cast<double>(count) / static_cast<double>(n);
}

double ecdf_eval(const std::vector<Vector>& samples, const Vector& z) {
  return Ecdf(samples)(z);
}

double dn_hat(const std::vector<Vector>& samples, const std::vector<Vector>& oracle_draws,
              const CdfFunction& cdf) {
  if (!cdf) throw MissingCdf("dn_hat: target has no CDF evaluator");
  if (oracle_draws.empty()) throw EmptySample("dn_hat: no oracle draws");
  std::vector<double> f(oracle_draws.size());
  for (std::size_t j = 0; j < oracle_draws.size(); ++j) f[j] = cdf(oracle_draws[j]);
  return dn_hat(Ecdf(samples), oracle_draws, f);
}

double dn_hat(const Ecdf& fn, const std::vector<Vector>& oracle_draws,
              std::span<const double> oracle_cdf) {
  if (oracle_draws.empty()) throw EmptySample("dn_hat: no oracle draws");
  if (oracle_cdf.size() != oracle_draws.size()) {
    throw DimensionMismatch("dn_hat: one CDF value per oracle draw is required");
  }
  double total = 0.0;
  for (std::size_t j = 0; j < oracle_draws.size(); ++j) {
    const double diff = fn(oracle_draws[j]) - oracle_cdf[j];
    total += diff * diff;
  }
  return total / static_cast<double>(oracle_draws.size());
}

double dn_bar(std::span<const double> replicate_values) {
  if (replicate_values.empty()) throw EmptySample("dn_bar: no replicate values");
  double total = 0.0;
  for (double v : replicate_values) total += v;
  return total / static_cast<double>(replicate_values.size());
}

MseBias mse_bias(const std::vector<Vector>& replicate_means, const Vector& truth) {
  if (replicate_means.empty()) throw EmptySample("mse_bias: no replicates");
  Vector mse = Vector::Zero(truth.size());
  Vector bias = Vector::Zero(truth.size());
  for (const auto& m : replicate_means) {
    require_dim(m.size(), truth.size(), "mse_bias");
    const Vector err = m - truth;
    mse += err.cwiseAbs2();
    bias += err;
  }
  const double b = static_cast<double>(replicate_means.size());
  return {mse / b, bias / b};
}

}  // namespace raptor
