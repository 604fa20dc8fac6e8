#ifndef RAPTOR_RNG_HPP
#define RAPTOR_RNG_HPP

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace raptor {

// Seedable random source. Independent streams are derived from a root
// seed plus a path of stream identifiers (replicate, chain, purpose, ...),
// so no two consumers ever share a generator.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : Rng(seed, {}) {}

  Rng(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
    std::vector<std::uint32_t> words;
    words.reserve(2 * (path.size() + 1));
    auto push = [&words](std::uint64_t v) {
      words.push_back(static_cast<std::uint32_t>(v & 0xffffffffu));
      words.push_back(static_cast<std::uint32_t>(v >> 32));
    };
    push(seed);
    for (auto p : path) push(p);
    std::seed_seq seq(words.begin(), words.end());
    engine_.seed(seq);
  }

  // Uniform on [0, 1).
  double uniform() { return unif_(engine_); }

  double normal() { return norm_(engine_); }

  Eigen::VectorXd normal_vector(Eigen::Index d) {
    Eigen::VectorXd z(d);
    for (Eigen::Index i = 0; i < d; ++i) z[i] = norm_(engine_);
    return z;
  }

  bool bernoulli(double p) { return uniform() < p; }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> unif_{0.0, 1.0};
  std::normal_distribution<double> norm_{0.0, 1.0};
};

}  // namespace raptor

#endif  // RAPTOR_RNG_HPP
