#ifndef RAPTOR_MIXTURE_HPP
#define RAPTOR_MIXTURE_HPP

#include <cstddef>
#include <filesystem>
#include <utility>
#include <vector>

#include "raptor/mvn.hpp"
#include "raptor/rng.hpp"

namespace raptor {

// Lower bound on every mixture weight after an M-step.
inline constexpr double kWeightFloor = 1e-4;
// Relative ridge added to each component covariance after an M-step:
// Sigma += kCovRidge * trace(Sigma) / d * I.
inline constexpr double kCovRidge = 1e-6;

struct WholeMoments {
  Vector mean;
  Matrix cov;
};

// mean = sum_k w_k mu_k,
// cov  = sum_k w_k (Sigma_k + mu_k mu_k^T) - mean mean^T.
WholeMoments whole_moments(const Vector& weights, const std::vector<Vector>& means,
                           const std::vector<CovMatrix>& covs);

// K-component Gaussian mixture with the moments of the whole mixture
// cached. Weights are renormalized on construction; they must already sum
// to one within 1e-9.
class MixtureState {
 public:
  MixtureState(Vector weights, std::vector<Vector> means, std::vector<CovMatrix> covs);

  int K() const { return static_cast<int>(means_.size()); }
  Eigen::Index dim() const { return means_.front().size(); }
  const Vector& weights() const { return weights_; }
  const std::vector<Vector>& means() const { return means_; }
  const std::vector<CovMatrix>& covs() const { return covs_; }
  const Vector& whole_mean() const { return whole_mean_; }
  const CovMatrix& whole_cov() const { return whole_cov_; }

 private:
  Vector weights_;
  std::vector<Vector> means_;
  std::vector<CovMatrix> covs_;
  Vector whole_mean_;
  CovMatrix whole_cov_;
};

WholeMoments whole_moments(const MixtureState& m);

// Running sufficient statistics of the complete-data model, one block per
// component: theta0 = E[1{z=k}], theta1 = E[1{z=k} x], theta2 = E[1{z=k} x x^T].
struct SuffStats {
  struct Component {
    double theta0 = 0.0;
    Vector theta1;
    Matrix theta2;
  };

  std::vector<Component> components;
  long n = 0;

  // The statistics whose M-step reproduces `m` exactly (before ridge).
  static SuffStats from_mixture(const MixtureState& m);
};

// Posterior component probabilities of x, computed in log space.
Vector responsibilities(const Vector& x, const MixtureState& m);

// theta <- (1 - gamma) theta + gamma * nu(x) T(x), with nu taken under m.
// Increments s.n.
void accumulate(SuffStats& s, const Vector& x, const MixtureState& m, double gamma);

// M-step with weight floor and covariance ridge. Components whose theta0
// has collapsed to zero keep their parameters from `previous`.
MixtureState maximize(const SuffStats& s, const MixtureState& previous);

// One online-EM step: accumulate followed by maximize.
std::pair<SuffStats, MixtureState> em_update(SuffStats s, const Vector& x,
                                             const MixtureState& m, double gamma);

// Online EM with the 1/n step schedule. The first `mstep_after`
// observations only accumulate statistics (responsibilities are taken
// under the initial mixture); from then on every observation is followed
// by an M-step. A mixture fitted to `prior_count` earlier samples enters
// as that many observations, so step n uses 1 / (prior_count + n).
class OnlineEm {
 public:
  explicit OnlineEm(MixtureState initial, long mstep_after = 0, long prior_count = 0);

  void observe(const Vector& x);

  const MixtureState& state() const { return state_; }
  const SuffStats& stats() const { return stats_; }
  // Observations seen, excluding prior_count.
  long count() const { return stats_.n - prior_count_; }
  long mstep_after() const { return mstep_after_; }
  long prior_count() const { return prior_count_; }

 private:
  SuffStats stats_;
  MixtureState state_;
  long mstep_after_;
  long prior_count_;
};

// Index (0-based) of the component whose density, weights excluded, is
// largest at x. Ties go to the lowest index.
std::size_t region_assign(const Vector& x, const MixtureState& m);

// Batch EM on a fixed sample. Iterates until the mean log-likelihood
// changes by less than `tol` or `max_iter` is reached.
struct BatchEmResult {
  MixtureState state;
  double log_likelihood;
  int iterations;
};

BatchEmResult batch_em(const std::vector<Vector>& samples, MixtureState init,
                       double tol = 1e-8, int max_iter = 500);
// Best of `restarts` runs, each seeded with K distinct sample points as
// means, the pooled sample covariance, and equal weights.
BatchEmResult batch_em(const std::vector<Vector>& samples, int K, Rng& rng,
                       int restarts = 5, double tol = 1e-8, int max_iter = 500);

// Labels of a two-dimensional slice through the regions. Coordinates not
// listed in `fixed` are the free axes; exactly two must remain, the lower
// index runs along rows.
struct FixedCoord {
  Eigen::Index index;
  double value;
};

struct RasterBounds {
  double xmin;
  double xmax;
  double ymin;
  double ymax;
  int res = 300;
};

struct LabelGrid {
  RasterBounds bounds;
  Eigen::Index x_axis = 0;
  Eigen::Index y_axis = 1;
  // Row-major, 1-based region labels; row = x index, column = y index.
  std::vector<int> labels;

  int at(int ix, int iy) const { return labels[static_cast<std::size_t>(ix) * bounds.res + iy]; }
  double x_at(int ix) const;
  double y_at(int iy) const;
};

LabelGrid region_slice_raster(const MixtureState& m, const std::vector<FixedCoord>& fixed,
                              const RasterBounds& bounds);

// Plain-text raster: `xmin xmax ymin ymax res`, then res rows of labels.
void write_raster(const std::filesystem::path& path, const LabelGrid& grid);
LabelGrid read_raster(const std::filesystem::path& path);

// K, then weights, then one line per mean, then one line per row-major
// covariance.
void write_mixture(const std::filesystem::path& path, const MixtureState& m);

}  // namespace raptor

#endif  // RAPTOR_MIXTURE_HPP
