#include "raptor/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>

#include "raptor/errors.hpp"

namespace raptor {

namespace {

constexpr double kCollapsedWeight = 1e-12;

Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

// Adds the relative ridge, escalating it tenfold while factorization
// fails. Returns false when no ridge up to the trace scale helps.
bool regularized_cov(Matrix sigma, double relative_ridge, CovMatrix& out) {
  const Eigen::Index d = sigma.rows();
  sigma = symmetrize(sigma);
  const double scale = std::max(sigma.trace() / static_cast<double>(d), 1e-300);
  double ridge = relative_ridge * scale;
  for (int attempt = 0; attempt < 8; ++attempt) {
    try {
      out = CovMatrix(Matrix(sigma + ridge * Matrix::Identity(d, d)));
      return true;
    } catch (const NotPositiveDefinite&) {
      ridge = ridge > 0.0 ? ridge * 10.0 : 1e-12 * scale;
    }
  }
  return false;
}

// Clamp to the floor, distribute the remaining mass proportionally.
Vector floored_weights(const Vector& raw) {
  const Eigen::Index k = raw.size();
  std::vector<bool> pinned(k, false);
  Vector w = raw.cwiseMax(0.0);
  for (Eigen::Index pass = 0; pass <= k; ++pass) {
    double free_mass = 1.0;
    double free_sum = 0.0;
    for (Eigen::Index i = 0; i < k; ++i) {
      if (pinned[i]) {
        free_mass -= kWeightFloor;
      } else {
        free_sum += w[i];
      }
    }
    bool changed = false;
    for (Eigen::Index i = 0; i < k; ++i) {
      if (pinned[i]) {
        w[i] = kWeightFloor;
      } else {
        w[i] = free_sum > 0.0 ? w[i] * free_mass / free_sum : free_mass;
        if (w[i] < kWeightFloor) {
          pinned[i] = true;
          changed = true;
        }
      }
    }
    if (!changed) break;
  }
  return w;
}

Vector log_component_densities(const Vector& x, const MixtureState& m) {
  Vector out(m.K());
  for (int k = 0; k < m.K(); ++k) out[k] = mvn_logpdf(x, m.means()[k], m.covs()[k]);
  return out;
}

std::string fmt(double v) {
  std::ostringstream ss;
  ss << std::setprecision(17) << v;
  return ss.str();
}

}  // namespace

WholeMoments whole_moments(const Vector& weights, const std::vector<Vector>& means,
                           const std::vector<CovMatrix>& covs) {
  const Eigen::Index d = means.front().size();
  Vector mean = Vector::Zero(d);
  Matrix second = Matrix::Zero(d, d);
  for (std::size_t k = 0; k < means.size(); ++k) {
    mean += weights[k] * means[k];
    second += weights[k] * (covs[k].matrix() + means[k] * means[k].transpose());
  }
  return {mean, symmetrize(second - mean * mean.transpose())};
}

WholeMoments whole_moments(const MixtureState& m) {
  return {m.whole_mean(), m.whole_cov().matrix()};
}

MixtureState::MixtureState(Vector weights, std::vector<Vector> means,
                           std::vector<CovMatrix> covs)
    : weights_(std::move(weights)),
      means_(std::move(means)),
      covs_(std::move(covs)),
      whole_cov_(CovMatrix::identity(1)) {
  if (means_.empty()) throw DimensionMismatch("MixtureState: K must be positive");
  if (weights_.size() != static_cast<Eigen::Index>(means_.size()) ||
      covs_.size() != means_.size()) {
    throw DimensionMismatch("MixtureState: weights, means and covs disagree on K");
  }
  const Eigen::Index d = means_.front().size();
  for (std::size_t k = 0; k < means_.size(); ++k) {
    require_dim(means_[k].size(), d, "MixtureState mean");
    require_dim(covs_[k].dim(), d, "MixtureState cov");
  }
  if ((weights_.array() < 0.0).any() || std::abs(weights_.sum() - 1.0) > 1e-9) {
    throw DomainError("MixtureState: weights must be nonnegative and sum to 1");
  }
  weights_ /= weights_.sum();
  auto whole = whole_moments(weights_, means_, covs_);
  whole_mean_ = std::move(whole.mean);
  if (!regularized_cov(whole.cov, 0.0, whole_cov_)) {
    throw NotPositiveDefinite("MixtureState: whole-space covariance is degenerate");
  }
}

SuffStats SuffStats::from_mixture(const MixtureState& m) {
  SuffStats s;
  for (int k = 0; k < m.K(); ++k) {
    const double w = m.weights()[k];
    const Vector& mu = m.means()[k];
    s.components.push_back(
        {w, w * mu, w * (m.covs()[k].matrix() + mu * mu.transpose())});
  }
  return s;
}

Vector responsibilities(const Vector& x, const MixtureState& m) {
  Vector logp = log_component_densities(x, m);
  for (int k = 0; k < m.K(); ++k) {
    logp[k] += m.weights()[k] > 0.0 ? std::log(m.weights()[k])
                                    : -std::numeric_limits<double>::infinity();
  }
  const double top = logp.maxCoeff();
  Vector nu = (logp.array() - top).exp();
  return nu / nu.sum();
}

void accumulate(SuffStats& s, const Vector& x, const MixtureState& m, double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw DomainError("accumulate: step weight must lie in [0, 1]");
  }
  require_dim(x.size(), m.dim(), "accumulate");
  s.n += 1;
  if (gamma == 0.0) return;
  const Vector nu = responsibilities(x, m);
  const Matrix xxt = x * x.transpose();
  for (int k = 0; k < m.K(); ++k) {
    auto& c = s.components[k];
    c.theta0 = (1.0 - gamma) * c.theta0 + gamma * nu[k];
    c.theta1 = (1.0 - gamma) * c.theta1 + (gamma * nu[k]) * x;
    c.theta2 = (1.0 - gamma) * c.theta2 + (gamma * nu[k]) * xxt;
  }
}

MixtureState maximize(const SuffStats& s, const MixtureState& previous) {
  const int K = previous.K();
  Vector raw(K);
  std::vector<Vector> means;
  std::vector<CovMatrix> covs;
  means.reserve(K);
  covs.reserve(K);
  for (int k = 0; k < K; ++k) {
    const auto& c = s.components[k];
    raw[k] = c.theta0;
    if (c.theta0 > kCollapsedWeight) {
      Vector mu = c.theta1 / c.theta0;
      const Matrix sigma = c.theta2 / c.theta0 - mu * mu.transpose();
      CovMatrix cov = previous.covs()[k];
      if (regularized_cov(sigma, kCovRidge, cov)) {
        means.push_back(std::move(mu));
        covs.push_back(std::move(cov));
        continue;
      }
    }
    means.push_back(previous.means()[k]);
    covs.push_back(previous.covs()[k]);
  }
  return MixtureState(floored_weights(raw / raw.sum()), std::move(means), std::move(covs));
}

std::pair<SuffStats, MixtureState> em_update(SuffStats s, const Vector& x,
                                             const MixtureState& m, double gamma) {
  if (gamma == 0.0) return {std::move(s), m};
  accumulate(s, x, m, gamma);
  MixtureState next = maximize(s, m);
  return {std::move(s), std::move(next)};
}

OnlineEm::OnlineEm(MixtureState initial, long mstep_after, long prior_count)
    : stats_(SuffStats::from_mixture(initial)),
      state_(std::move(initial)),
      mstep_after_(std::max(0L, mstep_after)),
      prior_count_(std::max(0L, prior_count)) {
  stats_.n = prior_count_;
}

void OnlineEm::observe(const Vector& x) {
  const double gamma = 1.0 / static_cast<double>(stats_.n + 1);
  accumulate(stats_, x, state_, gamma);
  if (count() >= mstep_after_) state_ = maximize(stats_, state_);
}

std::size_t region_assign(const Vector& x, const MixtureState& m) {
  std::size_t best = 0;
  double best_value = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < m.K(); ++k) {
    const double v = mvn_logpdf(x, m.means()[k], m.covs()[k]);
    if (v > best_value) {
      best_value = v;
      best = static_cast<std::size_t>(k);
    }
  }
  return best;
}

BatchEmResult batch_em(const std::vector<Vector>& samples, MixtureState init,
                       double tol, int max_iter) {
  if (samples.empty()) throw EmptySample("batch_em: no samples");
  const int K = init.K();
  const Eigen::Index d = init.dim();
  const double n = static_cast<double>(samples.size());
  MixtureState state = std::move(init);
  double previous_ll = -std::numeric_limits<double>::infinity();
  int iter = 0;
  double ll = previous_ll;
  Matrix resp(static_cast<Eigen::Index>(samples.size()), K);
  for (; iter < max_iter; ++iter) {
    // E-step and log-likelihood under the current parameters.
    ll = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      Vector logp = log_component_densities(samples[i], state);
      logp.array() += state.weights().array().log();
      const double top = logp.maxCoeff();
      const Vector w = (logp.array() - top).exp();
      const double total = w.sum();
      ll += top + std::log(total);
      resp.row(static_cast<Eigen::Index>(i)) = (w / total).transpose();
    }
    ll /= n;
    if (std::abs(ll - previous_ll) < tol) break;
    previous_ll = ll;

    Vector raw(K);
    std::vector<Vector> means;
    std::vector<CovMatrix> covs;
    for (int k = 0; k < K; ++k) {
      const double nk = resp.col(k).sum();
      raw[k] = nk / n;
      if (nk <= kCollapsedWeight * n) {
        means.push_back(state.means()[k]);
        covs.push_back(state.covs()[k]);
        continue;
      }
      Vector mu = Vector::Zero(d);
      for (std::size_t i = 0; i < samples.size(); ++i) {
        mu += resp(static_cast<Eigen::Index>(i), k) * samples[i];
      }
      mu /= nk;
      Matrix sigma = Matrix::Zero(d, d);
      for (std::size_t i = 0; i < samples.size(); ++i) {
        const Vector c = samples[i] - mu;
        sigma += resp(static_cast<Eigen::Index>(i), k) * c * c.transpose();
      }
      sigma /= nk;
      CovMatrix cov = state.covs()[k];
      if (!regularized_cov(sigma, 0.0, cov)) cov = state.covs()[k];
      means.push_back(std::move(mu));
      covs.push_back(std::move(cov));
    }
    Vector weights = K > 1 ? floored_weights(raw / raw.sum()) : Vector::Ones(1);
    state = MixtureState(std::move(weights), std::move(means), std::move(covs));
  }
  return {std::move(state), ll, iter};
}

BatchEmResult batch_em(const std::vector<Vector>& samples, int K, Rng& rng,
                       int restarts, double tol, int max_iter) {
  if (samples.empty()) throw EmptySample("batch_em: no samples");
  if (K < 1) throw DomainError("batch_em: K must be positive");
  if (static_cast<std::size_t>(K) > samples.size()) {
    throw DomainError("batch_em: fewer samples than components");
  }
  const Eigen::Index d = samples.front().size();
  Vector mean = Vector::Zero(d);
  for (const auto& x : samples) mean += x;
  mean /= static_cast<double>(samples.size());
  Matrix cov = Matrix::Zero(d, d);
  for (const auto& x : samples) cov += (x - mean) * (x - mean).transpose();
  cov /= static_cast<double>(samples.size());
  CovMatrix pooled = CovMatrix::identity(d);
  if (!regularized_cov(cov, 0.0, pooled)) {
    throw NotPositiveDefinite("batch_em: sample covariance is degenerate");
  }

  std::optional<BatchEmResult> best;
  const int runs = K == 1 ? 1 : std::max(1, restarts);
  for (int r = 0; r < runs; ++r) {
    std::vector<Vector> means;
    if (K == 1) {
      means.push_back(mean);
    } else {
      std::vector<std::size_t> picks;
      while (picks.size() < static_cast<std::size_t>(K)) {
        const auto i = static_cast<std::size_t>(rng.uniform() * samples.size());
        if (std::find(picks.begin(), picks.end(), i) == picks.end()) picks.push_back(i);
      }
      for (auto i : picks) means.push_back(samples[i]);
    }
    MixtureState init(Vector::Constant(K, 1.0 / K), std::move(means),
                      std::vector<CovMatrix>(K, pooled));
    auto result = batch_em(samples, std::move(init), tol, max_iter);
    if (!best || result.log_likelihood > best->log_likelihood) best = std::move(result);
  }
  return std::move(*best);
}

double LabelGrid::x_at(int ix) const {
  return bounds.xmin + ix * (bounds.xmax - bounds.xmin) / (bounds.res - 1);
}

double LabelGrid::y_at(int iy) const {
  return bounds.ymin + iy * (bounds.ymax - bounds.ymin) / (bounds.res - 1);
}

LabelGrid region_slice_raster(const MixtureState& m, const std::vector<FixedCoord>& fixed,
                              const RasterBounds& bounds) {
  if (!(bounds.xmin < bounds.xmax) || !(bounds.ymin < bounds.ymax)) {
    throw BadGrid("region_slice_raster: empty bounds");
  }
  if (bounds.res < 2) throw BadGrid("region_slice_raster: resolution must be at least 2");
  const Eigen::Index d = m.dim();
  Vector point = Vector::Zero(d);
  std::vector<bool> is_fixed(d, false);
  for (const auto& f : fixed) {
    if (f.index < 0 || f.index >= d || is_fixed[f.index]) {
      throw BadGrid("region_slice_raster: bad fixed coordinate index");
    }
    is_fixed[f.index] = true;
    point[f.index] = f.value;
  }
  std::vector<Eigen::Index> free_axes;
  for (Eigen::Index j = 0; j < d; ++j) {
    if (!is_fixed[j]) free_axes.push_back(j);
  }
  if (free_axes.size() != 2) {
    throw BadGrid("region_slice_raster: exactly two free coordinates are required");
  }
  LabelGrid grid;
  grid.bounds = bounds;
  grid.x_axis = free_axes[0];
  grid.y_axis = free_axes[1];
  grid.labels.resize(static_cast<std::size_t>(bounds.res) * bounds.res);
  for (int ix = 0; ix < bounds.res; ++ix) {
    point[grid.x_axis] = grid.x_at(ix);
    for (int iy = 0; iy < bounds.res; ++iy) {
      point[grid.y_axis] = grid.y_at(iy);
      grid.labels[static_cast<std::size_t>(ix) * bounds.res + iy] =
          static_cast<int>(region_assign(point, m)) + 1;
    }
  }
  return grid;
}

void write_raster(const std::filesystem::path& path, const LabelGrid& grid) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  const auto& b = grid.bounds;
  out << fmt(b.xmin) << ' ' << fmt(b.xmax) << ' ' << fmt(b.ymin) << ' ' << fmt(b.ymax)
      << ' ' << b.res << '\n';
  for (int ix = 0; ix < b.res; ++ix) {
    for (int iy = 0; iy < b.res; ++iy) {
      if (iy > 0) out << ' ';
      out << grid.at(ix, iy);
    }
    out << '\n';
  }
}

LabelGrid read_raster(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  LabelGrid grid;
  auto& b = grid.bounds;
  if (!(in >> b.xmin >> b.xmax >> b.ymin >> b.ymax >> b.res) || b.res < 2) {
    throw InvalidData(path.string() + ":1: bad raster header");
  }
  grid.labels.resize(static_cast<std::size_t>(b.res) * b.res);
  for (auto& label : grid.labels) {
    if (!(in >> label)) throw InvalidData(path.string() + ": truncated raster");
  }
  return grid;
}

void write_mixture(const std::filesystem::path& path, const MixtureState& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << m.K() << '\n';
  for (int k = 0; k < m.K(); ++k) out << (k ? " " : "") << fmt(m.weights()[k]);
  out << '\n';
  for (const auto& mu : m.means()) {
    for (Eigen::Index j = 0; j < mu.size(); ++j) out << (j ? " " : "") << fmt(mu[j]);
    out << '\n';
  }
  for (const auto& c : m.covs()) {
    const Matrix& s = c.matrix();
    bool first = true;
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
      for (Eigen::Index j = 0; j < s.cols(); ++j) {
        out << (first ? "" : " ") << fmt(s(i, j));
        first = false;
      }
    }
    out << '\n';
  }
}

}  // namespace raptor
