#ifndef RAPTOR_SAMPLERS_HPP
#define RAPTOR_SAMPLERS_HPP

#include <cstddef>
#include <memory>
#include <variant>
#include <vector>

#include "raptor/mixture.hpp"
#include "raptor/mvn.hpp"
#include "raptor/rng.hpp"
#include "raptor/targets.hpp"

namespace raptor {

// Random-walk scale 2.38^2 / d.
inline double optimal_scale(Eigen::Index d) { return 2.38 * 2.38 / static_cast<double>(d); }

// Regularization added to empirical covariances before they drive a
// proposal.
inline constexpr double kAmRidge = 1e-6;

struct ChainState {
  Vector x;
  double logpi = 0.0;
  long step_count = 0;
  long accept_count = 0;

  double acceptance_rate() const {
    return step_count > 0 ? static_cast<double>(accept_count) / step_count : 0.0;
  }
};

// Evaluates the target at x0. Throws TargetError when the log-density is
// NaN or -inf there.
ChainState make_chain(Vector x0, const TargetModel& target);

// Recursive mean and scatter matrix sum (x - mean)(x - mean)^T.
class RunningMoments {
 public:
  RunningMoments() = default;
  explicit RunningMoments(Eigen::Index d)
      : mean_(Vector::Zero(d)), scatter_(Matrix::Zero(d, d)) {}

  void push(const Vector& x);

  long count() const { return n_; }
  const Vector& mean() const { return mean_; }
  const Matrix& scatter() const { return scatter_; }
  // scatter / (n - 1); requires n >= 2.
  Matrix covariance() const;

 private:
  long n_ = 0;
  Vector mean_;
  Matrix scatter_;
};

RunningMoments am_update(RunningMoments moments, const Vector& x);

// Region 0 is {x : normal . x <= offset}, region 1 the complement.
struct HalfSpace {
  Vector normal;
  double offset = 0.0;

  std::size_t side(const Vector& x) const { return normal.dot(x) <= offset ? 0 : 1; }
};

// Frozen proposal used for every step of a sweep. Regional kernels draw
// from N(x, local[k(x)]) with probability 1 - alpha and from N(x, whole)
// otherwise; the covariances stored here already include the scale.
class ProposalKernel {
 public:
  using Partition =
      std::variant<std::monostate, HalfSpace, std::shared_ptr<const MixtureState>>;

  static ProposalKernel global(CovMatrix cov);
  static ProposalKernel regional(Partition partition, std::vector<CovMatrix> local,
                                 CovMatrix whole, double alpha);

  std::size_t region(const Vector& x) const;
  std::size_t region_count() const { return local_.empty() ? 1 : local_.size(); }
  double alpha() const { return alpha_; }
  const std::vector<CovMatrix>& local() const { return local_; }
  const CovMatrix& whole() const { return whole_; }
  bool is_regional() const { return !local_.empty(); }

  Vector propose(const Vector& x, Rng& rng) const;
  // log q(from -> to).
  double log_density(const Vector& from, const Vector& to) const;
  double log_density(const Vector& from, std::size_t from_region, const Vector& to) const;

 private:
  ProposalKernel(Partition partition, std::vector<CovMatrix> local, CovMatrix whole,
                 double alpha)
      : partition_(std::move(partition)),
        local_(std::move(local)),
        whole_(std::move(whole)),
        alpha_(alpha) {}

  Partition partition_;
  std::vector<CovMatrix> local_;
  CovMatrix whole_;
  double alpha_ = 1.0;
};

// Adaptive Metropolis: one global covariance eps * (C_n + ridge I). The
// initial covariance is used until `adapt_min` observations have arrived.
struct AmPolicy {
  AmPolicy(CovMatrix initial_cov, long adapt_min = 2);

  ProposalKernel snapshot() const;
  void observe(const Vector& x);

  CovMatrix initial_cov;
  RunningMoments moments;
  double eps;
  double ridge = kAmRidge;
  long adapt_min;
};

// Two-region adaptation with a fixed half-space boundary. Each region's
// covariance comes from the states observed in that region, the whole
// covariance from every state.
struct RaptPolicy {
  RaptPolicy(HalfSpace boundary, CovMatrix initial_region0, CovMatrix initial_region1,
             CovMatrix initial_whole, double alpha, long adapt_min = 2);

  ProposalKernel snapshot() const;
  void observe(const Vector& x);

  HalfSpace boundary;
  CovMatrix initial_local[2];
  CovMatrix initial_whole;
  RunningMoments region_moments[2];
  RunningMoments whole_moments;
  double alpha;
  double eps;
  double ridge = kAmRidge;
  long adapt_min;
};

RaptPolicy rapt_update(RaptPolicy policy, const Vector& x);

// Mixture-based regions and covariances, adapted by online EM.
struct RaptorPolicy {
  RaptorPolicy(MixtureState initial, double alpha, long mstep_after = 0, long prior_count = 0);

  ProposalKernel snapshot() const;
  void observe(const Vector& x) { em.observe(x); }
  const MixtureState& mixture() const { return em.state(); }

  OnlineEm em;
  double alpha;
  double eps;
};

using ProposalPolicy = std::variant<AmPolicy, RaptPolicy, RaptorPolicy>;

ProposalKernel snapshot(const ProposalPolicy& policy);
void observe(ProposalPolicy& policy, const Vector& x);

// Draw from the kernel at x.
Vector raptor_propose(const Vector& x, const ProposalKernel& kernel, Rng& rng);
// log q(x_from -> y_to).
double proposal_logdensity(const Vector& x_from, const Vector& y_to,
                           const ProposalKernel& kernel);

// One Metropolis-Hastings transition with the full Hastings correction.
// Throws TargetError when the target returns NaN at the proposal.
ChainState mh_step(ChainState chain, const ProposalKernel& kernel,
                   const TargetModel& target, Rng& rng);

}  // namespace raptor

#endif  // RAPTOR_SAMPLERS_HPP
