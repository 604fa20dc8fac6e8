#ifndef RAPTOR_INCA_HPP
#define RAPTOR_INCA_HPP

#include <cstdint>
#include <functional>
#include <vector>

#include "raptor/samplers.hpp"

namespace raptor {

// Position of pooled observation k (1-based) among M chains:
// time j = floor((k + M - 1) / M), chain i = k - M (j - 1), both 1-based.
struct PooledPosition {
  long chain;
  long time;
};

PooledPosition pool_index(long k, long M);
// Inverse map: k = M (time - 1) + chain.
long pooled_index(long chain, long time, long M);

// M chains sharing one adaptive policy. A sweep advances every chain once
// against a frozen snapshot of the policy, then feeds the new states to
// the policy in pooled order (chain 1..M).
class ChainPool {
 public:
  // Called for each pooled observation before it reaches the policy, with
  // the 1-based pooled index.
  using Observer = std::function<void(long pooled_k, long chain, const Vector& x)>;

  // Chain m draws from Rng(seed, {stream_tag, m}).
  ChainPool(const TargetModel& target, const std::vector<Vector>& starts,
            ProposalPolicy policy, std::uint64_t seed, std::uint64_t stream_tag = 0);

  void sweep(const TargetModel& target);

  void set_adaptation(bool on) { adapt_ = on; }
  bool adaptation() const { return adapt_; }
  void set_observer(Observer observer) { observer_ = std::move(observer); }

  const std::vector<ChainState>& chains() const { return chains_; }
  const ProposalPolicy& policy() const { return policy_; }
  long sweep_count() const { return sweep_; }
  long chain_count() const { return static_cast<long>(chains_.size()); }

 private:
  std::vector<ChainState> chains_;
  std::vector<Rng> rngs_;
  ProposalPolicy policy_;
  Observer observer_;
  long sweep_ = 0;
  bool adapt_ = true;
};

}  // namespace raptor

#endif  // RAPTOR_INCA_HPP
