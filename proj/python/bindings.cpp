#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "raptor/errors.hpp"
#include "raptor/harness.hpp"
#include "raptor/inca.hpp"

namespace py = pybind11;
using namespace raptor;

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::vector<Vector> rows(const RowMatrix& m) {
  std::vector<Vector> out;
  out.reserve(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.emplace_back(m.row(i).transpose());
  return out;
}

RowMatrix stack(const std::vector<Vector>& v) {
  if (v.empty()) return RowMatrix(0, 0);
  RowMatrix m(static_cast<Eigen::Index>(v.size()), v.front().size());
  for (std::size_t i = 0; i < v.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = v[i].transpose();
  return m;
}

std::vector<LohRecord> records_from(const std::vector<std::pair<int, int>>& xn) {
  std::vector<LohRecord> out;
  for (const auto& [x, n] : xn) out.push_back({x, n});
  return out;
}

MixtureState make_mixture(const Vector& weights, const std::vector<Vector>& means,
                          const std::vector<Matrix>& covs) {
  std::vector<CovMatrix> c;
  for (const auto& m : covs) c.emplace_back(m);
  return MixtureState(weights, means, std::move(c));
}

ScenarioConfig config_from(const std::string& target, const py::dict& overrides) {
  ScenarioConfig cfg;
  const auto names = preset_names();
  if (std::find(names.begin(), names.end(), target) != names.end()) {
    cfg = preset(target, overrides.contains("full_scale") &&
                             overrides["full_scale"].cast<bool>());
  } else {
    cfg = load_config(target);
  }
  for (const auto& [k, v] : overrides) {
    const auto key = k.cast<std::string>();
    if (key == "full_scale") continue;
    apply_setting(cfg, key, py::str(v).cast<std::string>(), "override");
  }
  cfg.validate();
  return cfg;
}

py::dict summary_dict(const AlgorithmSummary& s) {
  py::dict d;
  d["acceptance_rate"] = s.mean_ar;
  d["mean"] = s.mean;
  d["mse"] = s.mse;
  d["bias"] = s.bias;
  d["mse_sum"] = s.mse_sum;
  d["dn_bar"] = s.dn_bar;
  d["dn_checkpoints"] = s.dn_checkpoint_bars;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Regional adaptive MCMC with online-EM partitions";

  static py::exception<Error> base(m, "RaptorError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DomainError>(m, "DomainError", base.ptr());
  py::register_exception<DimensionMismatch>(m, "DimensionMismatch", base.ptr());
  py::register_exception<NotPositiveDefinite>(m, "NotPositiveDefinite", base.ptr());
  py::register_exception<TargetError>(m, "TargetError", base.ptr());
  py::register_exception<InvalidData>(m, "InvalidData", base.ptr());
  py::register_exception<EmptySample>(m, "EmptySample", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());

  // Gaussian utilities.
  m.def("mvn_logpdf",
        [](const Vector& x, const Vector& mean, const Matrix& cov) {
          return mvn_logpdf(x, mean, CovMatrix(cov));
        },
        py::arg("x"), py::arg("mean"), py::arg("cov"));
  m.def("mvn_sample",
        [](const Vector& mean, const Matrix& cov, int n, std::uint64_t seed) {
          Rng rng(seed);
          const CovMatrix c(cov);
          std::vector<Vector> out;
          for (int i = 0; i < n; ++i) out.push_back(mvn_sample(mean, c, rng));
          return stack(out);
        },
        py::arg("mean"), py::arg("cov"), py::arg("n"), py::arg("seed") = 0);

  // Targets.
  py::class_<GaussMixSpec>(m, "GaussMixSpec")
      .def(py::init([](double xi, double d, double S, int dim) { return GaussMixSpec{xi, d, S, dim}; }),
           py::arg("xi") = 0.5, py::arg("d") = 3.0, py::arg("S") = 1.0, py::arg("dim") = 5)
      .def_readwrite("xi", &GaussMixSpec::xi)
      .def_readwrite("d", &GaussMixSpec::d_sep)
      .def_readwrite("S", &GaussMixSpec::S)
      .def_readwrite("dim", &GaussMixSpec::dim)
      .def("target_mean", &GaussMixSpec::target_mean);
  py::class_<BananaSpec>(m, "BananaSpec")
      .def(py::init([](double B, int dim) { return BananaSpec{B, dim}; }), py::arg("B") = 0.1,
           py::arg("dim") = 5)
      .def_readwrite("B", &BananaSpec::B)
      .def_readwrite("dim", &BananaSpec::dim);
  m.def("gaussmix_logpdf", &gaussmix_logpdf, py::arg("x"), py::arg("spec"));
  m.def("gaussmix_cdf", &gaussmix_cdf, py::arg("z"), py::arg("spec"));
  m.def("banana_logpdf", &banana_logpdf, py::arg("x"), py::arg("spec"));
  m.def("banana_cdf", &banana_cdf, py::arg("z"), py::arg("spec"));
  m.def("banana_sample",
        [](const BananaSpec& spec, int n, std::uint64_t seed) {
          Rng rng(seed);
          std::vector<Vector> out;
          for (int i = 0; i < n; ++i) out.push_back(banana_iid_sample(spec, rng));
          return stack(out);
        },
        py::arg("spec"), py::arg("n"), py::arg("seed") = 0);
  m.def("betabinom_logpmf", &betabinom_logpmf, py::arg("x"), py::arg("n"), py::arg("pi2"),
        py::arg("gamma"));
  m.def("loh_log_posterior",
        [](const Vector& v, const std::vector<std::pair<int, int>>& records) {
          LohSpec spec;
          spec.records = records_from(records);
          spec.validate();
          return loh_log_posterior(v, spec);
        },
        py::arg("v"), py::arg("records"),
        "Log posterior at v = (logit eta, logit pi1, logit pi2, gamma); records are (x, n).");
  m.def("loh_synthetic_records", [] {
    std::vector<std::pair<int, int>> out;
    for (const auto& r : loh_synthetic_records()) out.emplace_back(r.x, r.n);
    return out;
  });

  // Mixtures.
  py::class_<MixtureState>(m, "MixtureState")
      .def(py::init(&make_mixture), py::arg("weights"), py::arg("means"), py::arg("covs"))
      .def_property_readonly("K", &MixtureState::K)
      .def_property_readonly("weights", &MixtureState::weights)
      .def_property_readonly("means", &MixtureState::means)
      .def_property_readonly("covs",
                             [](const MixtureState& s) {
                               std::vector<Matrix> out;
                               for (const auto& c : s.covs()) out.push_back(c.matrix());
                               return out;
                             })
      .def_property_readonly("whole_mean", &MixtureState::whole_mean)
      .def_property_readonly("whole_cov",
                             [](const MixtureState& s) { return s.whole_cov().matrix(); })
      .def("region", [](const MixtureState& s, const Vector& x) {
        return static_cast<int>(region_assign(x, s));
      }, py::arg("x"), "0-based index of the component whose density (weights excluded) is largest.");
  m.def("responsibilities", &responsibilities, py::arg("x"), py::arg("mixture"));

  py::class_<OnlineEm>(m, "OnlineEm")
      .def(py::init<MixtureState, long, long>(), py::arg("initial"), py::arg("mstep_after") = 0,
           py::arg("prior_count") = 0)
      .def("observe", &OnlineEm::observe, py::arg("x"))
      .def("observe_all",
           [](OnlineEm& em, const RowMatrix& xs) {
             for (Eigen::Index i = 0; i < xs.rows(); ++i) em.observe(xs.row(i).transpose());
           },
           py::arg("xs"))
      .def_property_readonly("state", &OnlineEm::state)
      .def_property_readonly("count", &OnlineEm::count);

  m.def("batch_em",
        [](const RowMatrix& xs, int K, std::uint64_t seed, int restarts) {
          Rng rng(seed);
          return batch_em(rows(xs), K, rng, restarts).state;
        },
        py::arg("samples"), py::arg("K"), py::arg("seed") = 0, py::arg("restarts") = 5);

  // Pooling and diagnostics.
  m.def("pool_index",
        [](long k, long M) {
          const auto p = pool_index(k, M);
          return std::make_pair(p.chain, p.time);
        },
        py::arg("k"), py::arg("M"), "(chain, time), both 1-based, of pooled observation k.");
  m.def("ecdf",
        [](const RowMatrix& samples, const RowMatrix& points) {
          const Ecdf f(rows(samples));
          Vector out(points.rows());
          for (Eigen::Index i = 0; i < points.rows(); ++i) out[i] = f(points.row(i).transpose());
          return out;
        },
        py::arg("samples"), py::arg("points"));
  m.def("dn_hat",
        [](const RowMatrix& samples, const RowMatrix& oracle, const CdfFunction& cdf) {
          return dn_hat(rows(samples), rows(oracle), cdf);
        },
        py::arg("samples"), py::arg("oracle"), py::arg("cdf"));

  // Sampling.
  m.def("sample",
        [](const std::function<double(const Vector&)>& logpdf, const RowMatrix& starts,
           const std::string& algorithm, const Matrix& initial_cov,
           std::optional<MixtureState> mixture, double alpha, long iterations,
           std::uint64_t seed, long adapt_min) {
          TargetModel t;
          t.dim = starts.cols();
          t.log_density = logpdf;
          ProposalPolicy policy = AmPolicy(CovMatrix(initial_cov), adapt_min);
          if (algorithm == "raptor") {
            if (!mixture) throw ConfigError("sample: algorithm 'raptor' needs a mixture");
            policy = RaptorPolicy(*mixture, alpha, adapt_min);
          } else if (algorithm != "am") {
            throw ConfigError("sample: algorithm must be 'am' or 'raptor'");
          }
          ChainPool pool(t, rows(starts), std::move(policy), seed);
          const long M = pool.chain_count();
          RowMatrix draws(iterations * M, t.dim);
          pool.set_observer([&](long k, long, const Vector& x) { draws.row(k - 1) = x.transpose(); });
          for (long s = 0; s < iterations; ++s) pool.sweep(t);
          long acc = 0;
          for (const auto& c : pool.chains()) acc += c.accept_count;
          py::dict out;
          out["draws"] = draws;
          out["acceptance_rate"] = static_cast<double>(acc) / static_cast<double>(iterations * M);
          if (const auto* r = std::get_if<RaptorPolicy>(&pool.policy())) out["mixture"] = r->mixture();
          return out;
        },
        py::arg("logpdf"), py::arg("starts"), py::arg("algorithm") = "am",
        py::arg("initial_cov"), py::arg("mixture") = py::none(), py::arg("alpha") = 0.2,
        py::arg("iterations") = 1000, py::arg("seed") = 0, py::arg("adapt_min") = 100,
        "Pooled draws (rows in pooled order) from M chains sharing one adaptive policy.");

  // Experiments.
  m.def("presets", &preset_names);
  m.def("run",
        [](const std::string& target, const py::kwargs& kw) {
          py::dict overrides;
          for (const auto& [k, v] : kw) overrides[k] = v;
          const ScenarioConfig cfg = config_from(target, overrides);
          ExperimentResult r;
          {
            py::gil_scoped_release release;
            r = run_experiment(cfg);
          }
          py::dict out;
          for (const auto& s : r.summaries) out[py::str(to_string(s.algorithm))] = summary_dict(s);
          return out;
        },
        py::arg("target"),
        "Runs a preset or config file; keyword arguments override settings. Returns per-algorithm summaries.");
}
