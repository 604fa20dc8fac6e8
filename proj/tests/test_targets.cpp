#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "raptor/errors.hpp"
#include "raptor/targets.hpp"

using namespace raptor;

namespace {

double log_std_normal(const Vector& x) {
  return -0.5 * static_cast<double>(x.size()) * std::log(2 * std::numbers::pi) -
         0.5 * x.squaredNorm();
}

double empirical_cdf(const std::vector<Vector>& draws, const Vector& z) {
  long c = 0;
  for (const auto& x : draws) c += (x.array() <= z.array()).all();
  return static_cast<double>(c) / static_cast<double>(draws.size());
}

// Binomial pmf by direct products, no log-gamma.
double binom_pmf_direct(int x, int n, double p) {
  double c = 1.0;
  for (int i = 1; i <= x; ++i) c = c * (n - x + i) / i;
  return c * std::pow(p, x) * std::pow(1 - p, n - x);
}

}  // namespace

// --- gaussmix -------------------------------------------------------------

TEST(GaussMix, CoincidentComponentsReduceToStandardNormal) {
  const GaussMixSpec g{0.5, 0.0, 1.0, 5};
  Rng rng(1);
  for (int i = 0; i < 20; ++i) {
    const Vector x = 2.0 * rng.normal_vector(5);
    EXPECT_NEAR(gaussmix_logpdf(x, g), log_std_normal(x), 1e-12);
  }
}

TEST(GaussMix, SymmetricWhenBalanced) {
  const GaussMixSpec g{0.5, 3.0, 1.0, 5};
  Rng rng(2);
  for (int i = 0; i < 20; ++i) {
    const Vector x = 3.0 * rng.normal_vector(5);
    EXPECT_NEAR(gaussmix_logpdf(x, g), gaussmix_logpdf(-x, g), 1e-10);
  }
}

TEST(GaussMix, TwoTermValueAtMode) {
  const GaussMixSpec g{0.5, 3.0, 1.0, 5};
  const double c = std::pow(2 * std::numbers::pi, -2.5);
  const double expected = std::log(0.5 * c + 0.5 * c * std::exp(-90.0));
  EXPECT_NEAR(gaussmix_logpdf(Vector::Constant(5, -3.0), g), expected, 1e-12);
}

TEST(GaussMix, DimensionMismatch) {
  EXPECT_THROW(gaussmix_logpdf(Vector::Zero(3), GaussMixSpec{}), DimensionMismatch);
}

TEST(GaussMix, InvalidSpec) {
  EXPECT_THROW((GaussMixSpec{0.0, 3.0, 1.0, 5}.validate()), DomainError);
  EXPECT_THROW((GaussMixSpec{0.5, 3.0, -1.0, 5}.validate()), DomainError);
}

TEST(GaussMix, CdfLimitsAndMedian) {
  const GaussMixSpec g{0.5, 3.0, 1.0, 5};
  EXPECT_NEAR(gaussmix_cdf(Vector::Constant(5, 1e6), g), 1.0, 1e-15);
  const GaussMixSpec c{0.5, 0.0, 1.0, 5};
  EXPECT_NEAR(gaussmix_cdf(Vector::Zero(5), c), std::pow(0.5, 5), 1e-15);
}

TEST(GaussMix, CdfMatchesIidEcdf) {
  const GaussMixSpec g{0.3, 2.0, 4.0, 5};
  Rng rng(3);
  std::vector<Vector> draws;
  for (int i = 0; i < 100000; ++i) draws.push_back(gaussmix_iid_sample(g, rng));
  for (int i = 0; i < 100; ++i) {
    const Vector z = draws[static_cast<std::size_t>(i * 997)] + 0.5 * rng.normal_vector(5);
    EXPECT_NEAR(empirical_cdf(draws, z), gaussmix_cdf(z, g), 0.01);
  }
}

TEST(GaussMix, TargetMean) {
  const GaussMixSpec g{0.3, 2.0, 4.0, 5};
  EXPECT_TRUE(g.target_mean().isApprox(Vector::Constant(5, 0.3 * -2.0 + 0.7 * 2.0)));
}

// --- banana ---------------------------------------------------------------

TEST(Banana, HandValues) {
  const BananaSpec b{0.1, 5};
  Vector x = Vector::Zero(5);
  x[1] = 10.0;
  EXPECT_NEAR(banana_logpdf(x, b), 0.0, 1e-14);
  x.setZero();
  x[0] = 10.0;
  EXPECT_NEAR(banana_logpdf(x, b), -0.5, 1e-14);
}

TEST(Banana, ZeroBIsIndependentGaussians) {
  const BananaSpec b{0.0, 5};
  Rng rng(4);
  for (int i = 0; i < 10; ++i) {
    const Vector x = 3.0 * rng.normal_vector(5);
    const double expected =
        -x[0] * x[0] / 200.0 - 0.5 * x.tail(4).squaredNorm();
    EXPECT_NEAR(banana_logpdf(x, b), expected, 1e-12);
  }
  Rng a(5), c(5);
  Vector z = a.normal_vector(5);
  z[0] *= 10.0;
  EXPECT_EQ(banana_iid_sample(b, c), z);
}

TEST(Banana, DrawMoments) {
  const BananaSpec b{0.1, 5};
  Rng rng(6);
  const int n = 100000;
  double m2 = 0.0, v1 = 0.0;
  for (int i = 0; i < n; ++i) {
    const Vector x = banana_iid_sample(b, rng);
    m2 += x[1];
    v1 += x[0] * x[0];
  }
  EXPECT_NEAR(m2 / n, 0.0, 0.1);
  EXPECT_NEAR(v1 / n, 100.0, 5.0);
}

TEST(Banana, ShearPreservesDensityUpToConstant) {
  const BananaSpec b{0.1, 5};
  Rng rng(7);
  double first = 0.0;
  for (int i = 0; i < 50; ++i) {
    Vector z = rng.normal_vector(5);
    z[0] *= 10.0;
    Vector x = z;
    x[1] = z[1] - b.B * z[0] * z[0] + 100.0 * b.B;
    const double gauss = -z[0] * z[0] / 200.0 - 0.5 * z.tail(4).squaredNorm();
    const double diff = banana_logpdf(x, b) - gauss;
    if (i == 0) first = diff;
    EXPECT_NEAR(diff, first, 1e-10);
  }
}

TEST(Banana, CdfMatchesIidEcdf) {
  const BananaSpec b{0.1, 5};
  Rng rng(8);
  std::vector<Vector> draws;
  for (int i = 0; i < 100000; ++i) draws.push_back(banana_iid_sample(b, rng));
  for (int i = 0; i < 100; ++i) {
    const Vector z = draws[static_cast<std::size_t>(i * 991)];
    EXPECT_NEAR(empirical_cdf(draws, z), banana_cdf(z, b), 0.01);
  }
}

TEST(Banana, CdfLimits) {
  const BananaSpec b{0.1, 5};
  EXPECT_NEAR(banana_cdf(Vector::Constant(5, 1e3), b), 1.0, 1e-9);
  EXPECT_EQ(banana_cdf(Vector::Constant(5, -1e3), b), 0.0);
}

TEST(Banana, CdfMarginalOfFirstCoordinate) {
  const BananaSpec b{0.1, 5};
  Vector z = Vector::Constant(5, 1e3);
  for (double x1 : {-25.0, -5.0, 0.0, 12.0}) {
    z[0] = x1;
    EXPECT_NEAR(banana_cdf(z, b), normal_cdf(x1 / 10.0), 1e-9);
  }
}

// --- LOH ------------------------------------------------------------------

TEST(Loh, GammaOutsidePriorIsMinusInfinity) {
  LohSpec spec{{{2, 5}}};
  Vector v = Vector::Zero(4);
  v[3] = 31.0;
  EXPECT_EQ(loh_log_posterior(v, spec), -INFINITY);
  v[3] = -31.0;
  EXPECT_EQ(loh_log_posterior(v, spec), -INFINITY);
}

TEST(Loh, BinomialTermIsolated) {
  LohSpec spec{{{2, 5}}};
  Vector v(4);
  v << 40.0, logit(0.3), logit(0.6), 1.0;
  double jac = 0.0;
  for (int i = 0; i < 3; ++i) {
    // log u + log(1 - u) for u = 1 / (1 + e^{-v}).
    jac += -v[i] - 2.0 * std::log1p(std::exp(-v[i]));
  }
  // The eta -> 1 limit, with jacobian terms computed directly.
  const double expected = std::log(binom_pmf_direct(2, 5, 0.3)) + jac;
  EXPECT_NEAR(loh_log_posterior(v, spec), expected, 1e-9);
}

TEST(Loh, LogisticJacobianAtZero) {
  const double u = logistic(0.0);
  EXPECT_DOUBLE_EQ(u * (1 - u), 0.25);
  // With eta in the binomial limit the pi2 coordinate only enters through
  // the jacobian, so a shift of pi2's logit from 0 to h changes the value
  // by log(u(1-u)) - log(0.25).
  LohSpec spec{{{2, 5}}};
  Vector a(4), b(4);
  a << 40.0, 0.0, 0.0, 0.0;
  b << 40.0, 0.0, 0.5, 0.0;
  const double ub = logistic(0.5);
  EXPECT_NEAR(loh_log_posterior(b, spec) - loh_log_posterior(a, spec),
              std::log(ub * (1 - ub)) - std::log(0.25), 1e-9);
}

TEST(Loh, InvalidRecords) {
  EXPECT_THROW((LohSpec{{{6, 5}}}.validate()), InvalidData);
  EXPECT_THROW((LohSpec{{}}.validate()), InvalidData);
  EXPECT_THROW(make_loh_target(LohSpec{{{-1, 5}}}), InvalidData);
  EXPECT_THROW(loh_log_posterior(Vector::Zero(4), LohSpec{{{6, 5}}}), InvalidData);
}

TEST(Loh, PermutationInvariant) {
  Rng rng(9);
  auto records = generate_loh_records({0.6, 0.3, 0.7, 1.0}, 25, 10, 50, rng);
  LohSpec a{records};
  std::shuffle(records.begin(), records.end(), rng.engine());
  LohSpec b{records};
  for (int i = 0; i < 10; ++i) {
    Vector v = rng.normal_vector(4);
    v[3] *= 5.0;
    EXPECT_NEAR(loh_log_posterior(v, a), loh_log_posterior(v, b), 1e-9);
  }
}

TEST(BetaBinom, Normalization) {
  double total = 0.0;
  for (int x = 0; x <= 10; ++x) total += std::exp(betabinom_logpmf(x, 10, 0.3, 0.0));
  EXPECT_NEAR(total, 1.0, 1e-10);
}

TEST(BetaBinom, BinomialLimit) {
  double tv = 0.0;
  for (int x = 0; x <= 10; ++x) {
    tv += std::abs(std::exp(betabinom_logpmf(x, 10, 0.3, -30.0)) - binom_pmf_direct(x, 10, 0.3));
  }
  EXPECT_LT(0.5 * tv, 1e-4);
}

TEST(BetaBinom, MeanIdentity) {
  double mean = 0.0;
  for (int x = 0; x <= 12; ++x) mean += x * std::exp(betabinom_logpmf(x, 12, 0.6, 1.0));
  EXPECT_NEAR(mean, 12 * 0.6, 1e-8);
}

TEST(BetaBinom, NormalizationGrid) {
  for (int n = 0; n <= 50; ++n) {
    for (double p : {0.05, 0.3, 0.5, 0.77, 0.95}) {
      for (double g : {-30.0, -12.0, -3.0, 0.0, 2.5, 12.0, 30.0}) {
        double total = 0.0;
        for (int x = 0; x <= n; ++x) total += std::exp(betabinom_logpmf(x, n, p, g));
        ASSERT_NEAR(total, 1.0, 1e-10) << "n=" << n << " pi2=" << p << " gamma=" << g;
      }
    }
  }
}

TEST(BetaBinom, DomainErrors) {
  EXPECT_THROW(betabinom_logpmf(-1, 5, 0.3, 0.0), DomainError);
  EXPECT_THROW(betabinom_logpmf(6, 5, 0.3, 0.0), DomainError);
  EXPECT_THROW(betabinom_logpmf(2, 5, 1.0, 0.0), DomainError);
}

TEST(LohData, CsvRoundTripAndErrors) {
  const auto dir = std::filesystem::temp_directory_path() / "raptor_loh_csv_test";
  std::filesystem::create_directories(dir);
  Rng rng(10);
  const auto records = generate_loh_records({0.9, 0.2, 0.8, 12.0}, 40, 10, 50, rng);
  write_loh_csv(dir / "a.csv", records);
  const auto back = read_loh_csv(dir / "a.csv");
  ASSERT_EQ(back.size(), records.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].x, records[i].x);
    EXPECT_EQ(back[i].n, records[i].n);
    EXPECT_LE(back[i].x, back[i].n);
    EXPECT_GE(back[i].n, 10);
    EXPECT_LE(back[i].n, 50);
  }
  {
    std::ofstream bad(dir / "b.csv");
    bad << "x,n\n1,4\n7,3\n";
  }
  try {
    read_loh_csv(dir / "b.csv");
    FAIL() << "expected InvalidData";
  } catch (const InvalidData& e) {
    EXPECT_NE(std::string(e.what()).find(":3:"), std::string::npos);
  }
  {
    std::ofstream bad(dir / "c.csv");
    bad << "a,b\n1,4\n";
  }
  EXPECT_THROW(read_loh_csv(dir / "c.csv"), InvalidData);
  EXPECT_THROW(read_loh_csv(dir / "missing.csv"), IoError);
  std::filesystem::remove_all(dir);
}
