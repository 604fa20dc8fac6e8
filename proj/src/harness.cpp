#include "raptor/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "raptor/errors.hpp"
#include "raptor/inca.hpp"

namespace raptor {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

// Stream tags for Rng(seed, {tag, ...}).
constexpr std::uint64_t kStartStream = 1;
constexpr std::uint64_t kChainStream = 2;
constexpr std::uint64_t kOracleStream = 3;
constexpr std::uint64_t kPrelimStream = 4;
constexpr int kPrelimReplicate = 1 << 20;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream ss;
  ss << std::setprecision(12) << v;
  return ss.str();
}

Vector loh_original(const Vector& z) {
  const LohParams p = loh_from_transformed(z);
  Vector v(4);
  v << p.eta, p.pi1, p.pi2, p.gamma;
  return v;
}

double radical_inverse(std::uint64_t index, std::uint64_t base) {
  double inv = 1.0 / static_cast<double>(base);
  double f = inv;
  double out = 0.0;
  while (index > 0) {
    out += f * static_cast<double>(index % base);
    index /= base;
    f *= inv;
  }
  return out;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

template <typename T>
T parse_number(const std::string& value, const std::string& key, const std::string& where) {
  std::istringstream ss(value);
  T out{};
  if (!(ss >> out) || !(ss >> std::ws).eof()) {
    throw ConfigError(where + ": field '" + key + "': cannot parse '" + value + "'");
  }
  return out;
}

bool parse_bool(const std::string& value, const std::string& key, const std::string& where) {
  if (value == "1" || value == "true" || value == "yes" || value == "on") return true;
  if (value == "0" || value == "false" || value == "no" || value == "off") return false;
  throw ConfigError(where + ": field '" + key + "': expected a boolean, got '" + value + "'");
}

// Coordinate used to order regions: pi1 for LOH, x1 otherwise.
Eigen::Index ordering_coord(TargetKind kind) { return kind == TargetKind::Loh ? 1 : 0; }

std::vector<std::size_t> order_by_coord(const std::vector<Vector>& means, Eigen::Index coord) {
  std::vector<std::size_t> order(means.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return means[a][coord] < means[b][coord];
  });
  return order;
}

MixtureState reorder(const MixtureState& m, const std::vector<std::size_t>& order) {
  Vector w(m.K());
  std::vector<Vector> means;
  std::vector<CovMatrix> covs;
  for (std::size_t i = 0; i < order.size(); ++i) {
    w[static_cast<Eigen::Index>(i)] = m.weights()[order[i]];
    means.push_back(m.means()[order[i]]);
    covs.push_back(m.covs()[order[i]]);
  }
  return MixtureState(w, std::move(means), std::move(covs));
}

// Everything about a scenario that is shared by all replicates.
struct PreparedScenario {
  const ScenarioConfig* cfg = nullptr;
  TargetModel target;
  std::optional<Vector> truth;

  // Initial proposal ingredients.
  std::optional<MixtureState> initial_mixture;
  // Samples behind initial_mixture (0 when it is not a fit).
  long initial_mixture_count = 0;
  Matrix initial_whole;
  Matrix initial_local[2];
  HalfSpace boundary_rapt;
  HalfSpace boundary_rapt2;

  std::vector<Vector> starts(int replicate) const;
  ProposalPolicy make_policy(Algorithm a) const;
};

std::vector<Vector> PreparedScenario::starts(int replicate) const {
  const auto& c = *cfg;
  const Eigen::Index d = target.dim;
  std::vector<Vector> out;
  for (int m = 0; m < c.chains; ++m) {
    Rng rng(c.seed, {kStartStream, static_cast<std::uint64_t>(replicate),
                     static_cast<std::uint64_t>(m)});
    switch (c.target) {
      case TargetKind::GaussMix: {
        // A draw from the initial mixture.
        const MixtureState& m0 = *initial_mixture;
        const double u = rng.uniform();
        int k = 0;
        double acc = m0.weights()[0];
        while (k + 1 < m0.K() && u > acc) acc += m0.weights()[++k];
        out.push_back(mvn_sample(m0.means()[k], m0.covs()[k], rng));
        break;
      }
      case TargetKind::Banana: {
        Vector x(d);
        for (Eigen::Index j = 0; j < d; ++j) {
          x[j] = c.start_low + (c.start_high - c.start_low) * rng.uniform();
        }
        out.push_back(std::move(x));
        break;
      }
      case TargetKind::Loh: {
        // Halton point over [0.1, 0.9]^3 x [-20, 20].
        const auto index = static_cast<std::uint64_t>(replicate) * c.chains + m + 1;
        LohParams p;
        p.eta = 0.1 + 0.8 * radical_inverse(index, 2);
        p.pi1 = 0.1 + 0.8 * radical_inverse(index, 3);
        p.pi2 = 0.1 + 0.8 * radical_inverse(index, 5);
        p.gamma = -20.0 + 40.0 * radical_inverse(index, 7);
        out.push_back(loh_to_transformed(p));
        break;
      }
    }
  }
  return out;
}

ProposalPolicy PreparedScenario::make_policy(Algorithm a) const {
  const auto& c = *cfg;
  switch (a) {
    case Algorithm::Am:
      return AmPolicy(CovMatrix(initial_whole), c.adapt_min);
    case Algorithm::Rapt:
    case Algorithm::Rapt2:
      return RaptPolicy(a == Algorithm::Rapt ? boundary_rapt : boundary_rapt2,
                        CovMatrix(initial_local[0]), CovMatrix(initial_local[1]),
                        CovMatrix(initial_whole), c.alpha, c.adapt_min);
    case Algorithm::Raptor:
      return RaptorPolicy(*initial_mixture, c.alpha, c.adapt_min, initial_mixture_count);
  }
  throw ConfigError("unknown algorithm");
}

HalfSpace axis_boundary(Eigen::Index d, Eigen::Index axis, double offset) {
  Vector n = Vector::Zero(d);
  n[axis] = 1.0;
  return {n, offset};
}

PreparedScenario prepare(const ScenarioConfig& cfg) {
  PreparedScenario p;
  p.cfg = &cfg;
  const Eigen::Index d = cfg.dim();
  switch (cfg.target) {
    case TargetKind::GaussMix: {
      const auto& g = cfg.gaussmix;
      p.target = make_gaussmix_target(g);
      p.truth = g.target_mean();
      // Start values: means 1.5x the truth, covariances half the truth,
      // equal weights, whole-space covariance five times component 2's.
      std::vector<Vector> means{1.5 * g.mean(0), 1.5 * g.mean(1)};
      std::vector<CovMatrix> covs{CovMatrix(Matrix(0.5 * g.cov(0))),
                                  CovMatrix(Matrix(0.5 * g.cov(1)))};
      p.initial_local[0] = covs[0].matrix();
      p.initial_local[1] = covs[1].matrix();
      p.initial_whole = 5.0 * g.cov(1);
      p.initial_mixture = MixtureState(Vector::Constant(2, 0.5), means, covs);
      Vector n = Vector::Zero(d);
      n[0] = 1.0;
      n[1] = 1.0;
      p.boundary_rapt = {n, 0.0};
      p.boundary_rapt2 = {n, 2.0};
      break;
    }
    case TargetKind::Banana:
    case TargetKind::Loh: {
      if (cfg.target == TargetKind::Banana) {
        p.target = make_banana_target(cfg.banana);
        p.truth = Vector::Zero(d);
        p.boundary_rapt = axis_boundary(d, 0, 0.0);
        p.boundary_rapt2 = axis_boundary(d, 1, -1.0);
      } else {
        LohSpec spec;
        spec.records = cfg.loh_data.empty() ? loh_synthetic_records()
                                            : read_loh_csv(cfg.loh_data);
        p.target = make_loh_target(spec);
        p.boundary_rapt = axis_boundary(d, 1, 0.0);
        p.boundary_rapt2 = axis_boundary(d, 3, 0.0);
      }
      Vector prelim_var = Vector::Constant(d, cfg.prelim_scale);
      if (cfg.target == TargetKind::Loh) prelim_var[3] *= 25.0;
      const CovMatrix proposal =
          CovMatrix::diagonal(prelim_var).scaled(optimal_scale(d));
      std::vector<Vector> starts;
      {
        ScenarioConfig start_cfg = cfg;
        start_cfg.chains = cfg.prelim_chains;
        PreparedScenario tmp = p;
        tmp.cfg = &start_cfg;
        starts = tmp.starts(kPrelimReplicate);
      }
      Rng rng(cfg.seed, {kPrelimStream});
      PreliminaryOptions opts;
      opts.iterations = cfg.prelim_iterations;
      opts.K = cfg.K;
      auto prelim = preliminary_stage(p.target, starts, proposal, opts, rng);
      p.initial_whole = prelim.cov;
      p.initial_mixture_count = static_cast<long>(prelim.sample_count);
      p.initial_mixture = reorder(prelim.mixture,
                                  order_by_coord(prelim.mixture.means(),
                                                 ordering_coord(cfg.target)));
      for (int r = 0; r < 2; ++r) p.initial_local[r] = prelim.cov;
      break;
    }
  }
  return p;
}

// Start covariance for region r of a RAPT boundary: the heaviest fitted
// component whose mean lies on that side, else the pooled covariance.
Matrix region_start_cov(const MixtureState& m, const HalfSpace& h, std::size_t r,
                        const Matrix& fallback) {
  double best = -1.0;
  Matrix out = fallback;
  for (int k = 0; k < m.K(); ++k) {
    if (h.side(m.means()[k]) == r && m.weights()[k] > best) {
      best = m.weights()[k];
      out = m.covs()[k].matrix();
    }
  }
  return out;
}

struct TraceSink {
  // trace[coord][time-1][chain-1]
  std::vector<std::vector<std::vector<double>>> values;
};

ReplicateResult run_replicate(const PreparedScenario& sc, Algorithm algorithm, int b,
                              TraceSink* trace, const std::vector<Vector>* oracle,
                              const std::vector<double>* oracle_cdf) {
  const auto& cfg = *sc.cfg;
  const Eigen::Index d = sc.target.dim;
  ProposalPolicy policy = sc.make_policy(algorithm);
  if (auto* rapt = std::get_if<RaptPolicy>(&policy)) {
    if (sc.cfg->target != TargetKind::GaussMix) {
      for (std::size_t r = 0; r < 2; ++r) {
        rapt->initial_local[r] = CovMatrix(
            region_start_cov(*sc.initial_mixture, rapt->boundary, r, sc.initial_whole));
      }
    }
  }
  const std::uint64_t tag = (static_cast<std::uint64_t>(kChainStream) << 40) |
                            (static_cast<std::uint64_t>(b) << 8) |
                            static_cast<std::uint64_t>(algorithm);
  ChainPool pool(sc.target, sc.starts(b), std::move(policy), cfg.seed, tag);

  std::vector<Vector> samples;
  samples.reserve(static_cast<std::size_t>(cfg.chains) * (cfg.iterations - cfg.burn_in));
  const long burn_in = cfg.burn_in;
  if (trace) {
    trace->values.assign(static_cast<std::size_t>(d),
                         std::vector<std::vector<double>>(
                             static_cast<std::size_t>(cfg.iterations),
                             std::vector<double>(static_cast<std::size_t>(cfg.chains))));
  }
  const long M = cfg.chains;
  pool.set_observer([&](long k, long chain, const Vector& x) {
    const long time = pool_index(k, M).time;
    if (time > burn_in) samples.push_back(x);
    if (trace) {
      for (Eigen::Index j = 0; j < d; ++j) {
        trace->values[static_cast<std::size_t>(j)][static_cast<std::size_t>(time - 1)]
                     [static_cast<std::size_t>(chain - 1)] = x[j];
      }
    }
  });

  long acc_at_burn = 0;
  long steps_at_burn = 0;
  for (long t = 1; t <= cfg.iterations; ++t) {
    pool.sweep(sc.target);
    if (t == burn_in) {
      for (const auto& c : pool.chains()) {
        acc_at_burn += c.accept_count;
        steps_at_burn += c.step_count;
      }
    }
  }
  long acc = 0;
  long steps = 0;
  for (const auto& c : pool.chains()) {
    acc += c.accept_count;
    steps += c.step_count;
  }

  ReplicateResult out;
  out.algorithm = algorithm;
  out.replicate = b;
  out.n = static_cast<long>(samples.size());
  out.summary.acceptance_rate =
      static_cast<double>(acc - acc_at_burn) / static_cast<double>(steps - steps_at_burn);
  Vector mean = Vector::Zero(d);
  for (const auto& x : samples) mean += x;
  mean /= static_cast<double>(samples.size());
  out.summary.coord_means = mean;
  if (sc.truth) {
    out.summary.bias = mean - *sc.truth;
    out.summary.mse = out.summary.bias.cwiseAbs2();
  } else {
    out.summary.bias = Vector::Constant(d, kNan);
    out.summary.mse = Vector::Constant(d, kNan);
  }
  out.summary.dn_hat = kNan;
  if (oracle && oracle_cdf) {
    out.summary.dn_hat = dn_hat(Ecdf(samples), *oracle, *oracle_cdf);
    for (long n : cfg.dn_checkpoints) {
      if (n <= out.n) {
        out.dn_checkpoints.emplace_back(
            n, dn_hat(Ecdf(samples, static_cast<std::size_t>(n)), *oracle, *oracle_cdf));
      }
    }
  }

  const Eigen::Index oc = ordering_coord(cfg.target);
  if (const auto* raptor = std::get_if<RaptorPolicy>(&pool.policy())) {
    const MixtureState& raw = raptor->mixture();
    MixtureState m = reorder(raw, order_by_coord(raw.means(), oc));
    for (int k = 0; k < m.K(); ++k) {
      out.local_means.push_back(m.means()[k]);
      out.local_covs.push_back(m.covs()[k].matrix());
    }
    const bool loh = cfg.target == TargetKind::Loh;
    out.regions.assign(static_cast<std::size_t>(m.K()),
                       RegionSummary{0, Vector::Zero(d), Vector::Zero(loh ? 4 : 0)});
    if (loh) out.whole_original_mean = Vector::Zero(4);
    std::vector<long> last(static_cast<std::size_t>(M), -1);
    out.chain_label_flips.assign(static_cast<std::size_t>(M), 0);
    for (std::size_t t = 0; t < samples.size(); ++t) {
      const std::size_t label = region_assign(samples[t], m);
      auto& reg = out.regions[label];
      reg.count += 1;
      reg.mean += samples[t];
      if (loh) {
        const Vector o = loh_original(samples[t]);
        reg.original_mean += o;
        out.whole_original_mean += o;
      }
      const auto chain = static_cast<std::size_t>(t % static_cast<std::size_t>(M));
      if (last[chain] >= 0 && static_cast<std::size_t>(last[chain]) != label) {
        out.chain_label_flips[chain] += 1;
      }
      last[chain] = static_cast<long>(label);
    }
    for (auto& reg : out.regions) {
      if (reg.count > 0) {
        reg.mean /= static_cast<double>(reg.count);
        if (loh) reg.original_mean /= static_cast<double>(reg.count);
      }
    }
    if (loh) out.whole_original_mean /= static_cast<double>(samples.size());
    out.final_mixture = std::move(m);
  } else if (const auto* rapt = std::get_if<RaptPolicy>(&pool.policy())) {
    std::vector<Vector> means;
    std::vector<Matrix> covs;
    for (const auto& rm : rapt->region_moments) {
      if (rm.count() < 2) continue;
      means.push_back(rm.mean());
      covs.push_back(rm.covariance());
    }
    for (auto i : order_by_coord(means, oc)) {
      out.local_means.push_back(means[i]);
      out.local_covs.push_back(covs[i]);
    }
  }
  return out;
}

void write_summary_csv(const std::filesystem::path& path, const ExperimentResult& r) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  const auto& cfg = r.config;
  const Eigen::Index d = cfg.dim();
  out << "scenario,algorithm,replicate,config_hash,seed,oracle_size,n,ar";
  for (const char* col : {"mean", "mse", "bias"}) {
    for (Eigen::Index j = 1; j <= d; ++j) out << ',' << col << '_' << j;
  }
  out << ",dn_hat,mse_sum\n";
  std::ostringstream hash;
  hash << std::hex << std::setw(16) << std::setfill('0') << cfg.hash();
  auto row = [&](const std::string& alg, const std::string& rep, long n, double ar,
                 const Vector& mean, const Vector& mse, const Vector& bias, double dn) {
    out << cfg.name << ',' << alg << ',' << rep << ',' << hash.str() << ',' << cfg.seed
        << ',' << cfg.oracle_size << ',' << n << ',' << num(ar);
    for (const Vector* v : {&mean, &mse, &bias}) {
      for (Eigen::Index j = 0; j < d; ++j) out << ',' << num((*v)[j]);
    }
    out << ',' << num(dn) << ',' << num(mse.sum()) << '\n';
  };
  for (const auto& rep : r.replicates) {
    row(to_string(rep.algorithm), std::to_string(rep.replicate + 1), rep.n,
        rep.summary.acceptance_rate, rep.summary.coord_means, rep.summary.mse,
        rep.summary.bias, rep.summary.dn_hat);
  }
  for (const auto& s : r.summaries) {
    long n = 0;
    for (const auto* rep : r.replicates_of(s.algorithm)) n += rep->n;
    row(to_string(s.algorithm), "all", n, s.mean_ar, s.mean, s.mse, s.bias, s.dn_bar);
  }
}

void write_traces(const std::filesystem::path& dir, const TraceSink& trace, int chains) {
  for (std::size_t j = 0; j < trace.values.size(); ++j) {
    const auto path = dir / ("trace_" + std::to_string(j + 1) + ".csv");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << "iteration";
    for (int m = 1; m <= chains; ++m) out << ",chain_" << m;
    out << '\n';
    for (std::size_t t = 0; t < trace.values[j].size(); ++t) {
      out << t + 1;
      for (double v : trace.values[j][t]) out << ',' << num(v);
      out << '\n';
    }
  }
}

void write_region_outputs(const std::filesystem::path& dir, const ExperimentResult& r,
                          const ReplicateResult& rep) {
  const auto& cfg = r.config;
  const MixtureState& m = *rep.final_mixture;
  write_mixture(dir / "mixture_final.txt", m);

  // Slices through the regions along the raster axes, with the remaining
  // coordinates fixed at each region's mean and at the whole-space mean.
  const Eigen::Index d = m.dim();
  auto slice = [&](const Vector& at, const std::string& file) {
    std::vector<FixedCoord> fixed;
    for (Eigen::Index j = 0; j < d; ++j) {
      if (j != cfg.raster_x && j != cfg.raster_y) fixed.push_back({j, at[j]});
    }
    const Matrix& w = m.whole_cov().matrix();
    const double sx = 3.0 * std::sqrt(w(cfg.raster_x, cfg.raster_x));
    const double sy = 3.0 * std::sqrt(w(cfg.raster_y, cfg.raster_y));
    RasterBounds bounds{m.whole_mean()[cfg.raster_x] - sx, m.whole_mean()[cfg.raster_x] + sx,
                        m.whole_mean()[cfg.raster_y] - sy, m.whole_mean()[cfg.raster_y] + sy,
                        cfg.raster_res};
    write_raster(dir / file, region_slice_raster(m, fixed, bounds));
  };
  if (d > 2) {
    for (std::size_t k = 0; k < rep.regions.size(); ++k) {
      const Vector& at = rep.regions[k].count > 0 ? rep.regions[k].mean : m.means()[k];
      slice(at, "raster_region" + std::to_string(k + 1) + ".txt");
    }
  }
  slice(m.whole_mean(), "raster_whole.txt");

  std::ofstream out(dir / "region_summary.csv", std::ios::binary);
  if (!out) throw IoError("cannot write region_summary.csv");
  out << "region,count";
  for (Eigen::Index j = 1; j <= d; ++j) out << ",mean_" << j;
  out << '\n';
  for (std::size_t k = 0; k < rep.regions.size(); ++k) {
    out << k + 1 << ',' << rep.regions[k].count;
    for (Eigen::Index j = 0; j < d; ++j) out << ',' << num(rep.regions[k].mean[j]);
    out << '\n';
  }
}

void write_loh_summary(const std::filesystem::path& dir, const ReplicateResult& rep) {
  std::ofstream out(dir / "loh_summary.csv", std::ios::binary);
  if (!out) throw IoError("cannot write loh_summary.csv");
  out << "parameter";
  for (std::size_t k = 0; k < rep.regions.size(); ++k) out << ",region" << k + 1;
  out << ",whole\n";
  const char* names[] = {"eta", "pi1", "pi2", "gamma"};
  for (Eigen::Index j = 0; j < 4; ++j) {
    out << names[j];
    for (const auto& reg : rep.regions) {
      out << ',' << num(reg.count > 0 ? reg.original_mean[j] : kNan);
    }
    out << ',' << num(rep.whole_original_mean[j]) << '\n';
  }
  out << "count";
  long total = 0;
  for (const auto& reg : rep.regions) {
    out << ',' << reg.count;
    total += reg.count;
  }
  out << ',' << total << '\n';
}

}  // namespace

// --- names -------------------------------------------------------------------

std::string to_string(TargetKind kind) {
  switch (kind) {
    case TargetKind::GaussMix: return "gaussmix";
    case TargetKind::Banana: return "banana";
    case TargetKind::Loh: return "loh";
  }
  return "?";
}

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::Am: return "am";
    case Algorithm::Rapt: return "rapt";
    case Algorithm::Rapt2: return "rapt2";
    case Algorithm::Raptor: return "raptor";
  }
  return "?";
}

Algorithm parse_algorithm(const std::string& name) {
  if (name == "am") return Algorithm::Am;
  if (name == "rapt") return Algorithm::Rapt;
  if (name == "rapt2") return Algorithm::Rapt2;
  if (name == "raptor") return Algorithm::Raptor;
  throw ConfigError("unknown algorithm '" + name + "' (expected am, rapt, rapt2, raptor)");
}

std::vector<Algorithm> parse_algorithms(const std::string& list) {
  std::vector<Algorithm> out;
  std::istringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    if (item == "all") {
      for (auto a : {Algorithm::Am, Algorithm::Rapt, Algorithm::Rapt2, Algorithm::Raptor}) {
        if (std::find(out.begin(), out.end(), a) == out.end()) out.push_back(a);
      }
      continue;
    }
    const Algorithm a = parse_algorithm(item);
    if (std::find(out.begin(), out.end(), a) == out.end()) out.push_back(a);
  }
  if (out.empty()) throw ConfigError("empty algorithm list");
  return out;
}

LohParams loh_synthetic_params() { return {0.840, 0.276, 0.690, 10.336}; }

std::vector<LohRecord> loh_synthetic_records() {
  Rng rng(kLohSyntheticSeed);
  return generate_loh_records(loh_synthetic_params(), kLohSyntheticRecords,
                              kLohSyntheticMinN, kLohSyntheticMaxN, rng);
}

// --- config ------------------------------------------------------------------

Eigen::Index ScenarioConfig::dim() const {
  switch (target) {
    case TargetKind::GaussMix: return gaussmix.dim;
    case TargetKind::Banana: return banana.dim;
    case TargetKind::Loh: return 4;
  }
  return 0;
}

void ScenarioConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& msg) {
    throw ConfigError("field '" + field + "': " + msg);
  };
  if (chains < 1) fail("chains", "must be at least 1");
  if (iterations < 1) fail("iterations", "must be at least 1");
  if (burn_in < 0 || burn_in >= iterations) fail("burn_in", "must satisfy 0 <= burn_in < iterations");
  if (replications < 1) fail("replications", "must be at least 1");
  if (!(alpha > 0.0 && alpha < 1.0)) fail("alpha", "must lie in (0, 1)");
  if (K < 1) fail("K", "must be at least 1");
  if (algorithms.empty()) fail("algorithms", "must not be empty");
  if (oracle_size < 0) fail("oracle_size", "must be nonnegative");
  if (adapt_min < 0) fail("adapt_min", "must be nonnegative");
  if (raster_res < 2) fail("raster_res", "must be at least 2");
  const auto d = dim();
  if (raster_x < 0 || raster_y < 0 || raster_x >= d || raster_y >= d || raster_x == raster_y) {
    fail("raster_axes", "must name two distinct coordinates");
  }
  if (!(start_low < start_high)) fail("start_low", "must be below start_high");
  try {
    switch (target) {
      case TargetKind::GaussMix:
        gaussmix.validate();
        if (K != 2) fail("K", "the Gaussian-mixture start values need K = 2");
        break;
      case TargetKind::Banana:
        banana.validate();
        break;
      case TargetKind::Loh:
        break;
    }
  } catch (const DomainError& e) {
    throw ConfigError(std::string("target: ") + e.what());
  }
  if (target != TargetKind::GaussMix && prelim_iterations < 1) {
    fail("prelim_iterations", "must be at least 1");
  }
  if (target != TargetKind::GaussMix && prelim_chains < 1) {
    fail("prelim_chains", "must be at least 1");
  }
  if (!(prelim_scale > 0.0)) fail("prelim_scale", "must be positive");
}

std::string ScenarioConfig::canonical() const {
  std::ostringstream ss;
  ss << "name=" << name << ";target=" << to_string(target);
  switch (target) {
    case TargetKind::GaussMix:
      ss << ";xi=" << num(gaussmix.xi) << ";d=" << num(gaussmix.d_sep)
         << ";S=" << num(gaussmix.S) << ";dim=" << gaussmix.dim;
      break;
    case TargetKind::Banana:
      ss << ";B=" << num(banana.B) << ";dim=" << banana.dim;
      break;
    case TargetKind::Loh:
      ss << ";data=" << (loh_data.empty() ? "synthetic" : loh_data.string());
      break;
  }
  ss << ";algorithms=";
  for (auto a : algorithms) ss << to_string(a) << ',';
  ss << ";chains=" << chains << ";iterations=" << iterations << ";burn_in=" << burn_in
     << ";replications=" << replications << ";alpha=" << num(alpha) << ";K=" << K
     << ";seed=" << seed << ";start=" << num(start_low) << ',' << num(start_high)
     << ";prelim=" << prelim_iterations << 'x' << prelim_chains << 'x' << num(prelim_scale)
     << ";adapt_min=" << adapt_min
     << ";oracle_size=" << oracle_size << ";dn_checkpoints=";
  for (auto n : dn_checkpoints) ss << n << ',';
  return ss.str();
}

std::uint64_t ScenarioConfig::hash() const { return fnv1a(canonical()); }

std::vector<std::string> preset_names() {
  return {"gaussmix-d3s1", "gaussmix-d0s4", "banana5", "loh"};
}

ScenarioConfig preset(const std::string& name, bool full_scale) {
  ScenarioConfig c;
  c.name = name;
  c.full_scale = full_scale;
  if (name == "gaussmix-d3s1" || name == "gaussmix-d0s4") {
    c.target = TargetKind::GaussMix;
    c.gaussmix = name == "gaussmix-d3s1" ? GaussMixSpec{0.5, 3.0, 1.0, 5}
                                         : GaussMixSpec{0.5, 0.0, 4.0, 5};
    c.chains = 10;
    c.iterations = 10000;
    c.burn_in = 5000;
    c.replications = full_scale ? 200 : 20;
    c.alpha = 0.2;
    c.dn_checkpoints = {1000, 10000};
  } else if (name == "banana5") {
    c.target = TargetKind::Banana;
    c.banana = BananaSpec{0.1, 5};
    c.chains = 1;
    c.iterations = 20000;
    c.burn_in = 4000;
    c.replications = full_scale ? 500 : 50;
    c.alpha = 0.2;
    c.start_low = -2.0;
    c.start_high = 2.0;
    c.prelim_iterations = 4000;
    c.prelim_chains = 1;
    c.dn_checkpoints = {1000, 10000};
  } else if (name == "loh") {
    c.target = TargetKind::Loh;
    c.algorithms = {Algorithm::Raptor};
    c.chains = 10;
    c.iterations = full_scale ? 200000 : 20000;
    c.burn_in = 10000;
    c.replications = 1;
    c.alpha = 0.7;
    c.prelim_iterations = 4000;
    c.prelim_chains = 10;
    c.oracle_size = 0;
    c.raster_x = 1;
    c.raster_y = 2;
  } else {
    std::string known;
    for (const auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
    throw ConfigError("unknown preset '" + name + "' (known: " + known + ")");
  }
  return c;
}

void apply_setting(ScenarioConfig& c, const std::string& key, const std::string& value,
                   const std::string& where) {
  auto d = [&](const char* k) { return parse_number<double>(value, k, where); };
  auto l = [&](const char* k) { return parse_number<long>(value, k, where); };
  auto i = [&](const char* k) { return static_cast<int>(parse_number<long>(value, k, where)); };
  try {
    if (key == "name") c.name = value;
    else if (key == "target") {
      if (value == "gaussmix") c.target = TargetKind::GaussMix;
      else if (value == "banana") c.target = TargetKind::Banana;
      else if (value == "loh") c.target = TargetKind::Loh;
      else throw ConfigError(where + ": field 'target': unknown target '" + value + "'");
    }
    else if (key == "xi") c.gaussmix.xi = d("xi");
    else if (key == "d") c.gaussmix.d_sep = d("d");
    else if (key == "S") c.gaussmix.S = d("S");
    else if (key == "dim") { c.gaussmix.dim = i("dim"); c.banana.dim = i("dim"); }
    else if (key == "B") c.banana.B = d("B");
    else if (key == "data") c.loh_data = value;
    else if (key == "algorithm" || key == "algorithms") c.algorithms = parse_algorithms(value);
    else if (key == "chains") c.chains = i("chains");
    else if (key == "iterations" || key == "iters") c.iterations = l("iterations");
    else if (key == "burn_in" || key == "burnin") c.burn_in = l("burn_in");
    else if (key == "replications") c.replications = i("replications");
    else if (key == "alpha") c.alpha = d("alpha");
    else if (key == "K") c.K = i("K");
    else if (key == "seed") c.seed = parse_number<std::uint64_t>(value, "seed", where);
    else if (key == "start_low") c.start_low = d("start_low");
    else if (key == "start_high") c.start_high = d("start_high");
    else if (key == "prelim_iterations") c.prelim_iterations = l("prelim_iterations");
    else if (key == "prelim_chains") c.prelim_chains = i("prelim_chains");
    else if (key == "prelim_scale") c.prelim_scale = d("prelim_scale");
    else if (key == "adapt_min") c.adapt_min = l("adapt_min");
    else if (key == "oracle_size") c.oracle_size = i("oracle_size");
    else if (key == "dn_checkpoints") {
      c.dn_checkpoints.clear();
      std::istringstream ss(value);
      std::string item;
      while (std::getline(ss, item, ',')) {
        if (!trim(item).empty()) {
          c.dn_checkpoints.push_back(parse_number<long>(trim(item), "dn_checkpoints", where));
        }
      }
    }
    else if (key == "raster_axes") {
      const auto comma = value.find(',');
      if (comma == std::string::npos) {
        throw ConfigError(where + ": field 'raster_axes': expected 'x,y'");
      }
      c.raster_x = parse_number<int>(trim(value.substr(0, comma)), "raster_axes", where);
      c.raster_y = parse_number<int>(trim(value.substr(comma + 1)), "raster_axes", where);
    }
    else if (key == "raster_res") c.raster_res = i("raster_res");
    else if (key == "out") c.out_dir = value;
    else if (key == "traces") c.traces = parse_bool(value, key, where);
    else if (key == "threads") c.threads = i("threads");
    else throw ConfigError(where + ": unknown field '" + key + "'");
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(where + ": field '" + key + "': " + e.what());
  }
}

ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  ScenarioConfig c;
  c.name = path.stem().string();
  std::string line;
  int lineno = 0;
  bool full_scale = false;
  std::vector<std::tuple<std::string, std::string, std::string>> settings;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw ConfigError(where + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "preset") {
      if (!settings.empty()) throw ConfigError(where + ": 'preset' must come first");
      const std::string name = c.name;
      c = preset(value, full_scale);
      c.name = name;
    } else if (key == "full_scale") {
      full_scale = parse_bool(value, key, where);
      c.full_scale = full_scale;
    } else {
      settings.emplace_back(key, value, where);
    }
  }
  for (const auto& [key, value, where] : settings) apply_setting(c, key, value, where);
  c.validate();
  return c;
}

// --- preliminary stage ---------------------------------------------------------

PreliminaryResult preliminary_stage(const TargetModel& target, const std::vector<Vector>& starts,
                                    const CovMatrix& proposal, const PreliminaryOptions& options,
                                    Rng& rng) {
  if (options.iterations < 1) {
    throw ConfigError("field 'prelim_iterations': must be at least 1");
  }
  if (starts.empty()) throw ConfigError("preliminary stage: no start points");
  const ProposalKernel kernel = ProposalKernel::global(proposal);
  const auto keep_from = static_cast<long>(options.discard * options.iterations);
  std::vector<Vector> samples;
  for (const auto& s : starts) {
    ChainState chain = make_chain(s, target);
    for (long t = 0; t < options.iterations; ++t) {
      chain = mh_step(std::move(chain), kernel, target, rng);
      if (t >= keep_from) samples.push_back(chain.x);
    }
  }
  const Eigen::Index d = target.dim;
  Vector mean = Vector::Zero(d);
  for (const auto& x : samples) mean += x;
  mean /= static_cast<double>(samples.size());
  Matrix cov = Matrix::Zero(d, d);
  for (const auto& x : samples) cov += (x - mean) * (x - mean).transpose();
  cov /= static_cast<double>(std::max<std::size_t>(samples.size() - 1, 1));
  auto fit = batch_em(samples, options.K, rng, options.em_restarts);
  return {cov, std::move(fit.state), samples.size()};
}

// --- experiment ----------------------------------------------------------------

const AlgorithmSummary& ExperimentResult::summary(Algorithm a) const {
  for (const auto& s : summaries) {
    if (s.algorithm == a) return s;
  }
  throw ConfigError("algorithm '" + to_string(a) + "' was not run");
}

std::vector<const ReplicateResult*> ExperimentResult::replicates_of(Algorithm a) const {
  std::vector<const ReplicateResult*> out;
  for (const auto& r : replicates) {
    if (r.algorithm == a) out.push_back(&r);
  }
  return out;
}

AlgorithmSummary summarize(Algorithm algorithm, const std::vector<const ReplicateResult*>& reps,
                           const std::optional<Vector>& truth) {
  if (reps.empty()) throw EmptySample("summarize: no replicates");
  AlgorithmSummary s;
  s.algorithm = algorithm;
  const Eigen::Index d = reps.front()->summary.coord_means.size();
  std::vector<Vector> means;
  std::vector<double> ars;
  std::vector<double> dns;
  s.mean = Vector::Zero(d);
  for (const auto* r : reps) {
    means.push_back(r->summary.coord_means);
    ars.push_back(r->summary.acceptance_rate);
    dns.push_back(r->summary.dn_hat);
    s.mean += r->summary.coord_means;
  }
  s.mean /= static_cast<double>(reps.size());
  s.mean_ar = dn_bar(ars);
  s.dn_bar = dn_bar(dns);
  if (truth) {
    auto mb = mse_bias(means, *truth);
    s.mse = mb.mse;
    s.bias = mb.bias;
    s.mse_sum = s.mse.sum();
  } else {
    s.mse = Vector::Constant(d, kNan);
    s.bias = Vector::Constant(d, kNan);
    s.mse_sum = kNan;
  }
  for (std::size_t c = 0; c < reps.front()->dn_checkpoints.size(); ++c) {
    std::vector<double> vals;
    for (const auto* r : reps) {
      if (c < r->dn_checkpoints.size()) vals.push_back(r->dn_checkpoints[c].second);
    }
    s.dn_checkpoint_bars.emplace_back(reps.front()->dn_checkpoints[c].first, dn_bar(vals));
  }
  return s;
}

ExperimentResult run_experiment(const ScenarioConfig& cfg) {
  cfg.validate();
  ExperimentResult result;
  result.config = cfg;
  const PreparedScenario sc = [&] {
    PreparedScenario p = prepare(result.config);
    p.cfg = &result.config;
    return p;
  }();
  result.truth = sc.truth;

  const int B = cfg.replications;
  const auto& algs = cfg.algorithms;
  const bool want_trace = cfg.traces && !cfg.out_dir.empty();
  TraceSink trace;

  // Oracle draws for D_n, one set per replicate shared by all algorithms.
  std::vector<std::vector<Vector>> oracle(static_cast<std::size_t>(B));
  std::vector<std::vector<double>> oracle_cdf(static_cast<std::size_t>(B));
  const bool with_dn = cfg.oracle_size > 0 && sc.target.has_sampler() && sc.target.has_cdf();

  struct Task {
    std::size_t alg;
    int replicate;
  };
  std::vector<Task> tasks;
  for (int b = 0; b < B; ++b) {
    for (std::size_t a = 0; a < algs.size(); ++a) tasks.push_back({a, b});
  }
  std::vector<ReplicateResult> slots(tasks.size());
  std::vector<std::once_flag> oracle_once(static_cast<std::size_t>(B));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto worker = [&] {
    for (;;) {
      const std::size_t t = next.fetch_add(1);
      if (t >= tasks.size()) return;
      try {
        const auto [a, b] = tasks[t];
        const auto bi = static_cast<std::size_t>(b);
        if (with_dn) {
          std::call_once(oracle_once[bi], [&] {
            Rng rng(cfg.seed, {kOracleStream, static_cast<std::uint64_t>(b)});
            oracle[bi].reserve(static_cast<std::size_t>(cfg.oracle_size));
            for (int j = 0; j < cfg.oracle_size; ++j) {
              oracle[bi].push_back(sc.target.iid_sampler(rng));
              oracle_cdf[bi].push_back(sc.target.cdf(oracle[bi].back()));
            }
          });
        }
        TraceSink* sink = (want_trace && b == 0 && a == algs.size() - 1) ? &trace : nullptr;
        slots[t] = run_replicate(sc, algs[a], b, sink, with_dn ? &oracle[bi] : nullptr,
                                 with_dn ? &oracle_cdf[bi] : nullptr);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(tasks.size());
        return;
      }
    }
  };
  int threads = cfg.threads > 0 ? cfg.threads
                                : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  threads = std::min<int>(threads, static_cast<int>(tasks.size()));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  // Report grouped by algorithm, replicates in order.
  for (std::size_t a = 0; a < algs.size(); ++a) {
    for (std::size_t t = 0; t < tasks.size(); ++t) {
      if (tasks[t].alg == a) result.replicates.push_back(std::move(slots[t]));
    }
  }
  for (auto a : algs) {
    result.summaries.push_back(summarize(a, result.replicates_of(a), result.truth));
  }

  if (!cfg.out_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(cfg.out_dir, ec);
    if (ec) throw IoError("cannot create output directory " + cfg.out_dir.string());
    write_summary_csv(cfg.out_dir / "summary.csv", result);
    for (const auto& rep : result.replicates) {
      if (rep.replicate == 0 && rep.final_mixture) {
        write_region_outputs(cfg.out_dir, result, rep);
        if (cfg.target == TargetKind::Loh) write_loh_summary(cfg.out_dir, rep);
      }
    }
    if (want_trace) write_traces(cfg.out_dir, trace, cfg.chains);
  }
  return result;
}

}  // namespace raptor
