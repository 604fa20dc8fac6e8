#include "raptor/samplers.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "raptor/errors.hpp"

namespace raptor {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

CovMatrix adapted_cov(const RunningMoments& m, double eps, double ridge) {
  Matrix c = m.covariance();
  c = 0.5 * (c + c.transpose());
  c.diagonal().array() += ridge;
  return CovMatrix(Matrix(eps * c));
}

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw DomainError("regional policy: alpha must lie in (0, 1), got " +
                      std::to_string(alpha));
  }
}

}  // namespace

ChainState make_chain(Vector x0, const TargetModel& target) {
  require_dim(x0.size(), target.dim, "make_chain");
  const double lp = target.log_density(x0);
  if (std::isnan(lp) || lp == kNegInf) {
    throw TargetError("make_chain: target log-density is not finite at the start point");
  }
  return ChainState{std::move(x0), lp, 0, 0};
}

void RunningMoments::push(const Vector& x) {
  if (n_ == 0 && mean_.size() == 0) {
    mean_ = Vector::Zero(x.size());
    scatter_ = Matrix::Zero(x.size(), x.size());
  }
  require_dim(x.size(), mean_.size(), "RunningMoments::push");
  ++n_;
  const Vector delta = x - mean_;
  mean_ += delta / static_cast<double>(n_);
  scatter_.noalias() += delta * (x - mean_).transpose();
}

Matrix RunningMoments::covariance() const {
  if (n_ < 2) throw DomainError("RunningMoments: covariance needs at least two points");
  return scatter_ / static_cast<double>(n_ - 1);
}

RunningMoments am_update(RunningMoments moments, const Vector& x) {
  moments.push(x);
  return moments;
}

// --- ProposalKernel ----------------------------------------------------------

ProposalKernel ProposalKernel::global(CovMatrix cov) {
  return ProposalKernel(std::monostate{}, {}, std::move(cov), 1.0);
}

ProposalKernel ProposalKernel::regional(Partition partition, std::vector<CovMatrix> local,
                                        CovMatrix whole, double alpha) {
  check_alpha(alpha);
  if (local.empty()) throw DimensionMismatch("ProposalKernel: no regional covariances");
  for (const auto& c : local) require_dim(c.dim(), whole.dim(), "ProposalKernel");
  if (std::holds_alternative<std::monostate>(partition) && local.size() != 1) {
    throw DimensionMismatch("ProposalKernel: trivial partition needs one region");
  }
  if (std::holds_alternative<HalfSpace>(partition) && local.size() != 2) {
    throw DimensionMismatch("ProposalKernel: half-space partition needs two regions");
  }
  if (auto* m = std::get_if<std::shared_ptr<const MixtureState>>(&partition)) {
    if (!*m || static_cast<std::size_t>((*m)->K()) != local.size()) {
      throw DimensionMismatch("ProposalKernel: mixture partition disagrees with K");
    }
  }
  return ProposalKernel(std::move(partition), std::move(local), std::move(whole), alpha);
}

std::size_t ProposalKernel::region(const Vector& x) const {
  if (const auto* h = std::get_if<HalfSpace>(&partition_)) return h->side(x);
  if (const auto* m = std::get_if<std::shared_ptr<const MixtureState>>(&partition_)) {
    return region_assign(x, **m);
  }
  return 0;
}

Vector ProposalKernel::propose(const Vector& x, Rng& rng) const {
  if (!is_regional() || rng.uniform() < alpha_) return mvn_sample(x, whole_, rng);
  return mvn_sample(x, local_[region(x)], rng);
}

double ProposalKernel::log_density(const Vector& from, std::size_t from_region,
                                   const Vector& to) const {
  const double whole = mvn_logpdf(to, from, whole_);
  if (!is_regional()) return whole;
  const double local = mvn_logpdf(to, from, local_[from_region]);
  return log_add_exp(std::log1p(-alpha_) + local, std::log(alpha_) + whole);
}

double ProposalKernel::log_density(const Vector& from, const Vector& to) const {
  return log_density(from, region(from), to);
}

// --- Policies ---------------------------------------------------------------

AmPolicy::AmPolicy(CovMatrix initial, long adapt_min_in)
    : initial_cov(std::move(initial)),
      moments(initial_cov.dim()),
      eps(optimal_scale(initial_cov.dim())),
      adapt_min(std::max(2L, adapt_min_in)) {}

ProposalKernel AmPolicy::snapshot() const {
  if (moments.count() < adapt_min) return ProposalKernel::global(initial_cov.scaled(eps));
  return ProposalKernel::global(adapted_cov(moments, eps, ridge));
}

void AmPolicy::observe(const Vector& x) { moments.push(x); }

RaptPolicy::RaptPolicy(HalfSpace boundary_in, CovMatrix initial_region0,
                       CovMatrix initial_region1, CovMatrix initial_whole_in,
                       double alpha_in, long adapt_min_in)
    : boundary(std::move(boundary_in)),
      initial_local{std::move(initial_region0), std::move(initial_region1)},
      initial_whole(std::move(initial_whole_in)),
      region_moments{RunningMoments(initial_whole.dim()),
                     RunningMoments(initial_whole.dim())},
      whole_moments(initial_whole.dim()),
      alpha(alpha_in),
      eps(optimal_scale(initial_whole.dim())),
      adapt_min(std::max(2L, adapt_min_in)) {
  check_alpha(alpha);
  require_dim(boundary.normal.size(), initial_whole.dim(), "RaptPolicy boundary");
  require_dim(initial_local[0].dim(), initial_whole.dim(), "RaptPolicy");
  require_dim(initial_local[1].dim(), initial_whole.dim(), "RaptPolicy");
}

ProposalKernel RaptPolicy::snapshot() const {
  std::vector<CovMatrix> local;
  for (int r = 0; r < 2; ++r) {
    local.push_back(region_moments[r].count() < adapt_min
                        ? initial_local[r].scaled(eps)
                        : adapted_cov(region_moments[r], eps, ridge));
  }
  CovMatrix whole = whole_moments.count() < adapt_min
                        ? initial_whole.scaled(eps)
                        : adapted_cov(whole_moments, eps, ridge);
  return ProposalKernel::regional(boundary, std::move(local), std::move(whole), alpha);
}

void RaptPolicy::observe(const Vector& x) {
  region_moments[boundary.side(x)].push(x);
  whole_moments.push(x);
}

RaptPolicy rapt_update(RaptPolicy policy, const Vector& x) {
  policy.observe(x);
  return policy;
}

RaptorPolicy::RaptorPolicy(MixtureState initial, double alpha_in, long mstep_after,
                           long prior_count)
    : em(std::move(initial), mstep_after, prior_count),
      alpha(alpha_in),
      eps(optimal_scale(em.state().dim())) {
  check_alpha(alpha);
}

ProposalKernel RaptorPolicy::snapshot() const {
  auto m = std::make_shared<const MixtureState>(em.state());
  std::vector<CovMatrix> local;
  local.reserve(m->K());
  for (const auto& c : m->covs()) local.push_back(c.scaled(eps));
  CovMatrix whole = m->whole_cov().scaled(eps);
  return ProposalKernel::regional(std::move(m), std::move(local), std::move(whole), alpha);
}

ProposalKernel snapshot(const ProposalPolicy& policy) {
  return std::visit([](const auto& p) { return p.snapshot(); }, policy);
}

void observe(ProposalPolicy& policy, const Vector& x) {
  std::visit([&x](auto& p) { p.observe(x); }, policy);
}

// --- Metropolis-Hastings ------------------------------------------------------

Vector raptor_propose(const Vector& x, const ProposalKernel& kernel, Rng& rng) {
  return kernel.propose(x, rng);
}

double proposal_logdensity(const Vector& x_from, const Vector& y_to,
                           const ProposalKernel& kernel) {
  return kernel.log_density(x_from, y_to);
}

ChainState mh_step(ChainState chain, const ProposalKernel& kernel,
                   const TargetModel& target, Rng& rng) {
  const std::size_t rx = kernel.region(chain.x);
  Vector y;
  if (!kernel.is_regional() || rng.uniform() < kernel.alpha()) {
    y = mvn_sample(chain.x, kernel.whole(), rng);
  } else {
    y = mvn_sample(chain.x, kernel.local()[rx], rng);
  }
  const double u = rng.uniform();
  chain.step_count += 1;

  const double logpi_y = target.log_density(y);
  if (std::isnan(logpi_y)) throw TargetError("mh_step: target log-density is NaN");
  if (logpi_y == kNegInf) return chain;

  double log_ratio = logpi_y - chain.logpi;
  if (kernel.is_regional()) {
    // Same region on both sides gives identical forward and reverse
    // densities, so the correction vanishes.
    const std::size_t ry = kernel.region(y);
    if (ry != rx) {
      log_ratio += kernel.log_density(y, ry, chain.x) - kernel.log_density(chain.x, rx, y);
    }
  }
  if (std::log(u) < log_ratio) {
    chain.x = std::move(y);
    chain.logpi = logpi_y;
    chain.accept_count += 1;
  }
  return chain;
}

}  // namespace raptor
