#include "raptor/inca.hpp"

#include <string>

#include "raptor/errors.hpp"

namespace raptor {

PooledPosition pool_index(long k, long M) {
  if (M < 1) throw DomainError("pool_index: M must be at least 1");
  if (k < 1) throw DomainError("pool_index: k must be at least 1, got " + std::to_string(k));
  const long j = (k + M - 1) / M;
  return {k - M * (j - 1), j};
}

long pooled_index(long chain, long time, long M) {
  if (M < 1 || chain < 1 || chain > M || time < 1) {
    throw DomainError("pooled_index: position out of range");
  }
  return M * (time - 1) + chain;
}

ChainPool::ChainPool(const TargetModel& target, const std::vector<Vector>& starts,
                     ProposalPolicy policy, std::uint64_t seed, std::uint64_t stream_tag)
    : policy_(std::move(policy)) {
  if (starts.empty()) throw DomainError("ChainPool: at least one chain is required");
  chains_.reserve(starts.size());
  rngs_.reserve(starts.size());
  for (std::size_t m = 0; m < starts.size(); ++m) {
    chains_.push_back(make_chain(starts[m], target));
    rngs_.emplace_back(seed, std::initializer_list<std::uint64_t>{stream_tag, m});
  }
}

void ChainPool::sweep(const TargetModel& target) {
  const ProposalKernel kernel = snapshot(policy_);
  for (std::size_t m = 0; m < chains_.size(); ++m) {
    chains_[m] = mh_step(std::move(chains_[m]), kernel, target, rngs_[m]);
  }
  ++sweep_;
  const long M = chain_count();
  for (long i = 1; i <= M; ++i) {
    const Vector& x = chains_[static_cast<std::size_t>(i - 1)].x;
    if (observer_) observer_(pooled_index(i, sweep_, M), i, x);
    if (adapt_) observe(policy_, x);
  }
}

}  // namespace raptor
