#ifndef RAPTOR_HARNESS_HPP
#define RAPTOR_HARNESS_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "raptor/diagnostics.hpp"
#include "raptor/mixture.hpp"
#include "raptor/samplers.hpp"
#include "raptor/targets.hpp"

namespace raptor {

enum class TargetKind { GaussMix, Banana, Loh };
enum class Algorithm { Am, Rapt, Rapt2, Raptor };

std::string to_string(TargetKind kind);
std::string to_string(Algorithm algorithm);
Algorithm parse_algorithm(const std::string& name);
// Comma-separated list; "all" expands to am,rapt,rapt2,raptor.
std::vector<Algorithm> parse_algorithms(const std::string& list);

// Seed and parameters of the bundled synthetic LOH data set.
inline constexpr std::uint64_t kLohSyntheticSeed = 20100;
inline constexpr int kLohSyntheticRecords = 40;
inline constexpr int kLohSyntheticMinN = 10;
inline constexpr int kLohSyntheticMaxN = 50;
LohParams loh_synthetic_params();
std::vector<LohRecord> loh_synthetic_records();

struct ScenarioConfig {
  std::string name = "custom";
  TargetKind target = TargetKind::GaussMix;
  GaussMixSpec gaussmix;
  BananaSpec banana;
  // Empty: the bundled synthetic stand-in.
  std::filesystem::path loh_data;

  std::vector<Algorithm> algorithms{Algorithm::Am, Algorithm::Rapt, Algorithm::Rapt2,
                                    Algorithm::Raptor};
  int chains = 10;
  long iterations = 10000;
  long burn_in = 5000;
  int replications = 20;
  double alpha = 0.2;
  int K = 2;
  std::uint64_t seed = 1;

  // Uniform start box (banana). Gaussmix starts are draws from the initial
  // mixture; LOH starts are a Halton sequence over [0.1, 0.9]^3 x [-20, 20].
  double start_low = -2.0;
  double start_high = 2.0;

  long prelim_iterations = 4000;
  int prelim_chains = 10;
  // Variance multiplier of the preliminary random-walk proposal.
  double prelim_scale = 1.0;
  // Pooled observations before adapted estimates replace the initial ones.
  long adapt_min = 100;

  int oracle_size = 10000;
  // Extra D_n evaluations on the first n pooled post-burn-in states.
  std::vector<long> dn_checkpoints;

  int raster_x = 0;
  int raster_y = 1;
  int raster_res = 300;

  std::filesystem::path out_dir;
  bool traces = false;
  int threads = 0;
  bool full_scale = false;

  Eigen::Index dim() const;
  // Throws ConfigError naming the offending field.
  void validate() const;
  std::string canonical() const;
  std::uint64_t hash() const;
};

std::vector<std::string> preset_names();
// Throws ConfigError for an unknown name. `full_scale` multiplies the
// replication count by ten (and the LOH run length to 2e5).
ScenarioConfig preset(const std::string& name, bool full_scale = false);

// Applies one `key=value` setting. `where` prefixes error messages.
void apply_setting(ScenarioConfig& cfg, const std::string& key, const std::string& value,
                   const std::string& where);
// key=value file; `preset = name` first selects a base preset.
ScenarioConfig load_config(const std::filesystem::path& path);

struct PreliminaryResult {
  Matrix cov;
  MixtureState mixture;
  std::size_t sample_count;
};

struct PreliminaryOptions {
  long iterations = 4000;
  int K = 2;
  // Fraction of each chain discarded before the batch-EM fit.
  double discard = 0.25;
  int em_restarts = 5;
};

// Plain Gaussian random walk from the given starts with a fixed proposal,
// followed by the pooled covariance and a batch-EM K-component fit.
PreliminaryResult preliminary_stage(const TargetModel& target, const std::vector<Vector>& starts,
                                    const CovMatrix& proposal, const PreliminaryOptions& options,
                                    Rng& rng);

struct RegionSummary {
  long count = 0;
  Vector mean;
  // LOH only: mean of (eta, pi1, pi2, gamma) on the original scale.
  Vector original_mean;
};

struct ReplicateResult {
  Algorithm algorithm = Algorithm::Raptor;
  int replicate = 0;
  long n = 0;
  RunSummary summary;
  std::vector<std::pair<long, double>> dn_checkpoints;
  // Regional estimates at the end of the run, ordered by the mean of the
  // ordering coordinate (lowest first). RAPTOR: mixture components; RAPT:
  // region moments.
  std::vector<Vector> local_means;
  std::vector<Matrix> local_covs;
  std::optional<MixtureState> final_mixture;
  // Post-burn-in states labelled by the final mixture (RAPTOR only).
  std::vector<RegionSummary> regions;
  std::vector<long> chain_label_flips;
  // LOH only: original-scale mean over all post-burn-in states.
  Vector whole_original_mean;
};

struct AlgorithmSummary {
  Algorithm algorithm = Algorithm::Raptor;
  double mean_ar = 0.0;
  Vector mean;
  Vector mse;
  Vector bias;
  double mse_sum = 0.0;
  double dn_bar = 0.0;
  std::vector<std::pair<long, double>> dn_checkpoint_bars;
};

struct ExperimentResult {
  ScenarioConfig config;
  std::optional<Vector> truth;
  std::vector<ReplicateResult> replicates;
  std::vector<AlgorithmSummary> summaries;

  const AlgorithmSummary& summary(Algorithm a) const;
  std::vector<const ReplicateResult*> replicates_of(Algorithm a) const;
};

// Runs every (algorithm, replicate) pair and, when cfg.out_dir is set,
// writes summary.csv, mixture_final.txt, raster_*.txt, region_summary.csv,
// loh_summary.csv (LOH) and trace_<coord>.csv (with cfg.traces).
ExperimentResult run_experiment(const ScenarioConfig& cfg);

// Aggregates a subset of replicates of one algorithm.
AlgorithmSummary summarize(Algorithm algorithm, const std::vector<const ReplicateResult*>& reps,
                           const std::optional<Vector>& truth);

}  // namespace raptor

#endif  // RAPTOR_HARNESS_HPP
