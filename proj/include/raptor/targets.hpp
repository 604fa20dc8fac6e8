#ifndef RAPTOR_TARGETS_HPP
#define RAPTOR_TARGETS_HPP

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "raptor/mvn.hpp"
#include "raptor/rng.hpp"

namespace raptor {

// A target distribution: unnormalized log-density plus, where one exists,
// an i.i.d. sampler and a joint CDF for the ECDF-distance diagnostics.
struct TargetModel {
  std::string name;
  Eigen::Index dim = 0;
  std::function<double(const Vector&)> log_density;
  std::function<Vector(Rng&)> iid_sampler;
  std::function<double(const Vector&)> cdf;

  bool has_sampler() const { return static_cast<bool>(iid_sampler); }
  bool has_cdf() const { return static_cast<bool>(cdf); }
};

// Standard normal CDF.
double normal_cdf(double x);

// ---------------------------------------------------------------------------
// Two-component Gaussian mixture
//   xi * N(-d_sep * 1, I) + (1 - xi) * N(d_sep * 1, S * I)

struct GaussMixSpec {
  double xi = 0.5;
  double d_sep = 3.0;
  double S = 1.0;
  int dim = 5;

  void validate() const;
  // Component means and covariances, component 1 first.
  Vector mean(int component) const;
  Matrix cov(int component) const;
  // Mean of the full mixture, used as the truth for MSE and bias.
  Vector target_mean() const;
};

double gaussmix_logpdf(const Vector& x, const GaussMixSpec& spec);
Vector gaussmix_iid_sample(const GaussMixSpec& spec, Rng& rng);
double gaussmix_cdf(const Vector& z, const GaussMixSpec& spec);
TargetModel make_gaussmix_target(const GaussMixSpec& spec);

// ---------------------------------------------------------------------------
// Curved ("banana") density
//   -x1^2/200 - (x2 + B x1^2 - 100 B)^2 / 2 - (x3^2 + ... + xd^2) / 2

struct BananaSpec {
  double B = 0.1;
  int dim = 5;

  void validate() const;
};

double banana_logpdf(const Vector& x, const BananaSpec& spec);
Vector banana_iid_sample(const BananaSpec& spec, Rng& rng);
// Joint CDF. The shear only couples x1 and x2, so the CDF reduces to a
// one-dimensional integral over x1, evaluated by adaptive Gauss-Kronrod.
double banana_cdf(const Vector& z, const BananaSpec& spec);
TargetModel make_banana_target(const BananaSpec& spec);

// ---------------------------------------------------------------------------
// Loss-of-heterozygosity binomial / beta-binomial mixture posterior.
// Sampled vector: (logit eta, logit pi1, logit pi2, gamma).

struct LohRecord {
  int x = 0;
  int n = 0;
};

struct LohSpec {
  std::vector<LohRecord> records;
  double gamma_bound = 30.0;

  // Throws InvalidData on an empty list or a record outside 0 <= x <= n.
  void validate() const;
};

// Parameters on the original scale.
struct LohParams {
  double eta = 0.0;
  double pi1 = 0.0;
  double pi2 = 0.0;
  double gamma = 0.0;
};

double logistic(double v);
double logit(double p);
LohParams loh_from_transformed(const Vector& v);
Vector loh_to_transformed(const LohParams& p);

double binom_logpmf(int x, int n, double p);
// Beta-binomial with overdispersion omega = e^g / (1 + e^g),
// a = pi2 (1 - omega) / omega, b = (1 - pi2) (1 - omega) / omega.
// Throws DomainError outside 0 <= x <= n or pi2 outside (0, 1).
double betabinom_logpmf(int x, int n, double pi2, double gamma);

double loh_log_posterior(const Vector& v, const LohSpec& spec);
TargetModel make_loh_target(LohSpec spec);

// Draws `count` records from the model at `params` with sample sizes
// uniform on [n_min, n_max].
std::vector<LohRecord> generate_loh_records(const LohParams& params, int count,
                                            int n_min, int n_max, Rng& rng);

// CSV with header `x,n`.
std::vector<LohRecord> read_loh_csv(const std::filesystem::path& path);
void write_loh_csv(const std::filesystem::path& path,
                   const std::vector<LohRecord>& records);

}  // namespace raptor

#endif  // RAPTOR_TARGETS_HPP
