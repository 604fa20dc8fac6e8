#include "raptor/targets.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "raptor/errors.hpp"

namespace raptor {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_two_pi() { return std::log(2.0 * std::numbers::pi); }

// log(1 + e^v) without overflow.
double softplus(double v) {
  return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
}

double log_choose(int n, int x) {
  return std::lgamma(n + 1.0) - std::lgamma(x + 1.0) - std::lgamma(n - x + 1.0);
}

// log Gamma(shape) draw, stable for very small shapes.
double log_gamma_draw(double shape, Rng& rng) {
  if (shape >= 1.0) {
    std::gamma_distribution<double> g(shape, 1.0);
    return std::log(g(rng.engine()));
  }
  std::gamma_distribution<double> g(shape + 1.0, 1.0);
  double u = rng.uniform();
  while (u <= 0.0) u = rng.uniform();
  return std::log(g(rng.engine())) + std::log(u) / shape;
}

}  // namespace

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// --- Gaussian mixture -------------------------------------------------------

void GaussMixSpec::validate() const {
  if (!(xi > 0.0 && xi < 1.0)) throw DomainError("gaussmix: xi must be in (0, 1)");
  if (!(S > 0.0)) throw DomainError("gaussmix: S must be positive");
  if (dim < 1) throw DomainError("gaussmix: dim must be positive");
}

Vector GaussMixSpec::mean(int component) const {
  return Vector::Constant(dim, component == 0 ? -d_sep : d_sep);
}

Matrix GaussMixSpec::cov(int component) const {
  return (component == 0 ? 1.0 : S) * Matrix::Identity(dim, dim);
}

Vector GaussMixSpec::target_mean() const {
  return Vector::Constant(dim, xi * (-d_sep) + (1.0 - xi) * d_sep);
}

double gaussmix_logpdf(const Vector& x, const GaussMixSpec& spec) {
  require_dim(x.size(), spec.dim, "gaussmix_logpdf");
  const double d = spec.dim;
  const double q1 = (x.array() + spec.d_sep).square().sum();
  const double q2 = (x.array() - spec.d_sep).square().sum() / spec.S;
  const double l1 = std::log(spec.xi) - 0.5 * d * log_two_pi() - 0.5 * q1;
  const double l2 = std::log1p(-spec.xi) - 0.5 * d * log_two_pi() -
                    0.5 * d * std::log(spec.S) - 0.5 * q2;
  return log_add_exp(l1, l2);
}

Vector gaussmix_iid_sample(const GaussMixSpec& spec, Rng& rng) {
  const bool first = rng.bernoulli(spec.xi);
  Vector z = rng.normal_vector(spec.dim);
  if (first) return z.array() - spec.d_sep;
  return std::sqrt(spec.S) * z.array() + spec.d_sep;
}

double gaussmix_cdf(const Vector& z, const GaussMixSpec& spec) {
  require_dim(z.size(), spec.dim, "gaussmix_cdf");
  const double sd2 = std::sqrt(spec.S);
  double p1 = 1.0;
  double p2 = 1.0;
  for (Eigen::Index j = 0; j < z.size(); ++j) {
    p1 *= normal_cdf(z[j] + spec.d_sep);
    p2 *= normal_cdf((z[j] - spec.d_sep) / sd2);
  }
  return spec.xi * p1 + (1.0 - spec.xi) * p2;
}

TargetModel make_gaussmix_target(const GaussMixSpec& spec) {
  spec.validate();
  TargetModel t;
  t.name = "gaussmix";
  t.dim = spec.dim;
  t.log_density = [spec](const Vector& x) { return gaussmix_logpdf(x, spec); };
  t.iid_sampler = [spec](Rng& rng) { return gaussmix_iid_sample(spec, rng); };
  t.cdf = [spec](const Vector& z) { return gaussmix_cdf(z, spec); };
  return t;
}

// --- Banana -----------------------------------------------------------------

void BananaSpec::validate() const {
  if (!(B >= 0.0)) throw DomainError("banana: B must be nonnegative");
  if (dim < 2) throw DomainError("banana: dim must be at least 2");
}

double banana_logpdf(const Vector& x, const BananaSpec& spec) {
  require_dim(x.size(), spec.dim, "banana_logpdf");
  const double x1 = x[0];
  const double r = x[1] + spec.B * x1 * x1 - 100.0 * spec.B;
  double tail = 0.0;
  for (Eigen::Index j = 2; j < x.size(); ++j) tail += x[j] * x[j];
  return -x1 * x1 / 200.0 - 0.5 * r * r - 0.5 * tail;
}

Vector banana_iid_sample(const BananaSpec& spec, Rng& rng) {
  Vector z = rng.normal_vector(spec.dim);
  z[0] *= 10.0;
  z[1] = z[1] - spec.B * z[0] * z[0] + 100.0 * spec.B;
  return z;
}

double banana_cdf(const Vector& z, const BananaSpec& spec) {
  require_dim(z.size(), spec.dim, "banana_cdf");
  double tail = 1.0;
  for (Eigen::Index j = 2; j < z.size(); ++j) tail *= normal_cdf(z[j]);
  if (tail == 0.0) return 0.0;
  // x1 = 10 u with u standard normal; given u, x2 <= z2 iff
  // N(0,1) <= z2 + 100 B u^2 - 100 B.
  constexpr double kLower = -9.0;
  const double upper = std::min(z[0] / 10.0, 9.0);
  if (upper <= kLower) return 0.0;
  const double z2 = z[1];
  const double b100 = 100.0 * spec.B;
  auto integrand = [z2, b100](double u) {
    return std::exp(-0.5 * u * u) / std::sqrt(2.0 * std::numbers::pi) *
           normal_cdf(z2 + b100 * u * u - b100);
  };
  using boost::math::quadrature::gauss_kronrod;
  const double joint =
      gauss_kronrod<double, 31>::integrate(integrand, kLower, upper, 12, 1e-11);
  return std::clamp(joint, 0.0, 1.0) * tail;
}

TargetModel make_banana_target(const BananaSpec& spec) {
  spec.validate();
  TargetModel t;
  t.name = "banana";
  t.dim = spec.dim;
  t.log_density = [spec](const Vector& x) { return banana_logpdf(x, spec); };
  t.iid_sampler = [spec](Rng& rng) { return banana_iid_sample(spec, rng); };
  t.cdf = [spec](const Vector& z) { return banana_cdf(z, spec); };
  return t;
}

// --- LOH --------------------------------------------------------------------

void LohSpec::validate() const {
  if (records.empty()) throw InvalidData("loh: record list is empty");
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.x < 0 || r.n < 0 || r.x > r.n) {
      throw InvalidData("loh: record " + std::to_string(i + 1) +
                        " violates 0 <= x <= n (x=" + std::to_string(r.x) +
                        ", n=" + std::to_string(r.n) + ")");
    }
  }
  if (!(gamma_bound > 0.0)) throw InvalidData("loh: gamma_bound must be positive");
}

double logistic(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

double logit(double p) { return std::log(p) - std::log1p(-p); }

LohParams loh_from_transformed(const Vector& v) {
  require_dim(v.size(), 4, "loh_from_transformed");
  return {logistic(v[0]), logistic(v[1]), logistic(v[2]), v[3]};
}

Vector loh_to_transformed(const LohParams& p) {
  Vector v(4);
  v << logit(p.eta), logit(p.pi1), logit(p.pi2), p.gamma;
  return v;
}

double binom_logpmf(int x, int n, double p) {
  if (x < 0 || x > n) throw DomainError("binom_logpmf: x outside [0, n]");
  double out = log_choose(n, x);
  if (x > 0) out += x * std::log(p);
  if (n - x > 0) out += (n - x) * std::log1p(-p);
  return out;
}

double betabinom_logpmf(int x, int n, double pi2, double gamma) {
  if (x < 0 || x > n) throw DomainError("betabinom_logpmf: x outside [0, n]");
  if (!(pi2 > 0.0 && pi2 < 1.0)) {
    throw DomainError("betabinom_logpmf: pi2 must lie in (0, 1)");
  }
  // (1 - omega) / omega = e^{-gamma}.
  const double s = std::exp(-gamma);
  const double a = pi2 * s;
  const double b = (1.0 - pi2) * s;
  if (s <= 1e5) {
    return log_choose(n, x) + std::lgamma(x + a) + std::lgamma(n - x + b) -
           std::lgamma(n + s) - (std::lgamma(a) + std::lgamma(b) - std::lgamma(s));
  }
  // Near the binomial limit the log-gamma differences cancel badly; use
  // the rising-factorial form relative to the binomial pmf instead.
  double out = log_choose(n, x) + x * std::log(pi2) + (n - x) * std::log1p(-pi2);
  for (int i = 0; i < x; ++i) out += std::log1p(i / a);
  for (int i = 0; i < n - x; ++i) out += std::log1p(i / b);
  for (int i = 0; i < n; ++i) out -= std::log1p(i / s);
  return out;
}

double loh_log_posterior(const Vector& v, const LohSpec& spec) {
  require_dim(v.size(), 4, "loh_log_posterior");
  const double gamma = v[3];
  if (!(std::abs(gamma) <= spec.gamma_bound)) return kNegInf;
  for (const auto& r : spec.records) {
    if (r.x < 0 || r.x > r.n) throw InvalidData("loh: record violates 0 <= x <= n");
  }
  // log u = -softplus(-v), log(1 - u) = -softplus(v).
  const double log_eta = -softplus(-v[0]);
  const double log_1m_eta = -softplus(v[0]);
  const double pi1 = logistic(v[1]);
  const double pi2 = logistic(v[2]);
  const double log_pi1 = -softplus(-v[1]);
  const double log_1m_pi1 = -softplus(v[1]);
  if (!(pi2 > 0.0 && pi2 < 1.0) || !(pi1 > 0.0 && pi1 < 1.0)) return kNegInf;

  double out = 0.0;
  for (const auto& r : spec.records) {
    const double lc = log_choose(r.n, r.x);
    const double lb = lc + r.x * log_pi1 + (r.n - r.x) * log_1m_pi1;
    const double lbb = betabinom_logpmf(r.x, r.n, pi2, gamma);
    out += log_add_exp(log_eta + lb, log_1m_eta + lbb);
  }
  for (int i = 0; i < 3; ++i) out += -softplus(-v[i]) - softplus(v[i]);
  return out;
}

TargetModel make_loh_target(LohSpec spec) {
  spec.validate();
  TargetModel t;
  t.name = "loh";
  t.dim = 4;
  t.log_density = [spec = std::move(spec)](const Vector& v) {
    return loh_log_posterior(v, spec);
  };
  return t;
}

std::vector<LohRecord> generate_loh_records(const LohParams& params, int count,
                                            int n_min, int n_max, Rng& rng) {
  if (count < 1 || n_min < 1 || n_max < n_min) {
    throw DomainError("generate_loh_records: bad count or size range");
  }
  std::vector<LohRecord> out;
  out.reserve(count);
  std::uniform_int_distribution<int> size(n_min, n_max);
  const double s = std::exp(-params.gamma);
  for (int i = 0; i < count; ++i) {
    const int n = size(rng.engine());
    double p = params.pi1;
    if (!rng.bernoulli(params.eta)) {
      const double la = log_gamma_draw(params.pi2 * s, rng);
      const double lb = log_gamma_draw((1.0 - params.pi2) * s, rng);
      p = logistic(la - lb);
    }
    std::binomial_distribution<int> binom(n, p);
    out.push_back({binom(rng.engine()), n});
  }
  return out;
}

std::vector<LohRecord> read_loh_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open LOH data file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw InvalidData(path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "x,n") {
    throw InvalidData(path.string() + ":1: expected header 'x,n', got '" + line + "'");
  }
  std::vector<LohRecord> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ss(line);
    LohRecord r;
    char comma = 0;
    if (!(ss >> r.x >> comma >> r.n) || comma != ',' || !(ss >> std::ws).eof()) {
      throw InvalidData(path.string() + ":" + std::to_string(lineno) +
                        ": expected two integers 'x,n'");
    }
    if (r.x < 0 || r.x > r.n) {
      throw InvalidData(path.string() + ":" + std::to_string(lineno) +
                        ": record violates 0 <= x <= n");
    }
    out.push_back(r);
  }
  if (out.empty()) throw InvalidData(path.string() + ": no records");
  return out;
}

void write_loh_csv(const std::filesystem::path& path,
                   const std::vector<LohRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "x,n\n";
  for (const auto& r : records) out << r.x << ',' << r.n << '\n';
}

}  // namespace raptor
