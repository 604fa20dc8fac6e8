#include <filesystem>
#include <iomanip>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "raptor/errors.hpp"
#include "raptor/harness.hpp"

namespace {

raptor::ScenarioConfig resolve(const std::string& what, bool full_scale) {
  for (const auto& name : raptor::preset_names()) {
    if (name == what) return raptor::preset(name, full_scale);
  }
  if (std::filesystem::exists(what)) {
    auto cfg = raptor::load_config(what);
    if (full_scale && !cfg.full_scale) cfg.replications *= 10;
    cfg.full_scale = cfg.full_scale || full_scale;
    return cfg;
  }
  throw raptor::ConfigError("'" + what + "' is neither a preset nor a config file");
}

void print_summary(const raptor::ExperimentResult& r) {
  std::cout << r.config.name << "  (" << r.config.replications << " replicates, "
            << r.config.chains << " chains x " << r.config.iterations << " iterations)\n";
  std::cout << std::left << std::setw(8) << "alg" << std::right << std::setw(10) << "AR"
            << std::setw(14) << "MSE sum" << std::setw(14) << "Dn bar" << '\n';
  for (const auto& s : r.summaries) {
    std::cout << std::left << std::setw(8) << raptor::to_string(s.algorithm) << std::right
              << std::fixed << std::setprecision(4) << std::setw(10) << s.mean_ar
              << std::scientific << std::setprecision(4) << std::setw(14) << s.mse_sum
              << std::setw(14) << s.dn_bar << std::defaultfloat << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Regional adaptive MCMC experiments"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run a preset or a key=value config file");
  std::string target;
  std::string algorithm;
  std::uint64_t seed = 0;
  int replications = 0;
  long iters = 0;
  long burnin = -1;
  double alpha = 0.0;
  int chains = 0;
  int threads = 0;
  std::string out;
  bool full_scale = false;
  bool traces = false;
  run->add_option("target", target, "Preset name or config path")->required();
  auto* seed_opt = run->add_option("--seed", seed, "Master seed");
  run->add_option("--algorithm", algorithm, "am, rapt, rapt2, raptor, a comma list or all");
  run->add_option("--replications", replications, "Number of replicates")->check(CLI::PositiveNumber);
  run->add_option("--iters", iters, "Iterations per chain")->check(CLI::PositiveNumber);
  run->add_option("--burnin", burnin, "Burn-in iterations")->check(CLI::NonNegativeNumber);
  run->add_option("--alpha", alpha, "Whole-space mixing probability");
  run->add_option("--chains", chains, "Parallel chains")->check(CLI::PositiveNumber);
  run->add_option("--threads", threads, "Worker threads (0: all cores)")->check(CLI::NonNegativeNumber);
  run->add_option("--out", out, "Output directory");
  run->add_flag("--full-scale", full_scale, "Ten times the desk-scale replications");
  run->add_flag("--traces", traces, "Write per-chain traces");

  app.add_subcommand("presets", "List the presets");

  auto* gen = app.add_subcommand("gen-loh", "Write the bundled synthetic LOH data set");
  std::string gen_path;
  gen->add_option("path", gen_path, "Output CSV")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("presets")) {
      for (const auto& name : raptor::preset_names()) std::cout << name << '\n';
      return 0;
    }
    if (app.got_subcommand("gen-loh")) {
      raptor::write_loh_csv(gen_path, raptor::loh_synthetic_records());
      return 0;
    }
    auto cfg = resolve(target, full_scale);
    if (!algorithm.empty()) cfg.algorithms = raptor::parse_algorithms(algorithm);
    if (*seed_opt) cfg.seed = seed;
    if (replications > 0) cfg.replications = replications;
    if (iters > 0) cfg.iterations = iters;
    if (burnin >= 0) cfg.burn_in = burnin;
    if (alpha != 0.0) cfg.alpha = alpha;
    if (chains > 0) cfg.chains = chains;
    if (threads > 0) cfg.threads = threads;
    if (!out.empty()) cfg.out_dir = out;
    if (traces) cfg.traces = true;
    const auto result = raptor::run_experiment(cfg);
    print_summary(result);
    return 0;
  } catch (const raptor::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
