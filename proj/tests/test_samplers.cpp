#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <numbers>

#include "raptor/errors.hpp"
#include "raptor/samplers.hpp"
#include "test_util.hpp"

using namespace raptor;
using raptor::testing::ks_critical_01;
using raptor::testing::ks_statistic;

namespace {

Vector v1(double a) { return Vector::Constant(1, a); }
CovMatrix c1(double s2) { return CovMatrix(Matrix::Constant(1, 1, s2)); }

TargetModel one_d_normal() {
  TargetModel t;
  t.name = "n01";
  t.dim = 1;
  t.log_density = [](const Vector& x) { return -0.5 * x[0] * x[0]; };
  return t;
}

// 0.4 N(-1.5, 0.6^2) + 0.6 N(1.5, 1).
double mix_logpdf(double x) {
  const double a = std::log(0.4) - 0.5 * std::pow((x + 1.5) / 0.6, 2) - std::log(0.6);
  const double b = std::log(0.6) - 0.5 * std::pow(x - 1.5, 2);
  return log_add_exp(a, b);
}

TargetModel one_d_mixture() {
  TargetModel t;
  t.name = "mix1d";
  t.dim = 1;
  t.log_density = [](const Vector& x) { return mix_logpdf(x[0]); };
  return t;
}

std::vector<double> mixture_iid(int n, Rng& rng) {
  std::vector<double> out;
  for (int i = 0; i < n; ++i) {
    out.push_back(rng.bernoulli(0.4) ? -1.5 + 0.6 * rng.normal() : 1.5 + rng.normal());
  }
  return out;
}

std::vector<double> run_thinned(const ProposalKernel& kernel, const TargetModel& t, long steps,
                                int thin, std::uint64_t seed) {
  Rng rng(seed);
  ChainState c = make_chain(v1(0.0), t);
  std::vector<double> out;
  for (long s = 1; s <= steps; ++s) {
    c = mh_step(std::move(c), kernel, t, rng);
    if (s % thin == 0) out.push_back(c.x[0]);
  }
  return out;
}

MixtureState fitted_1d_mixture() {
  Vector w(2);
  w << 0.4, 0.6;
  return MixtureState(w, {v1(-1.5), v1(1.5)}, {c1(0.36), c1(1.0)});
}

double log_normal_density(const Vector& y, const Vector& mean, const Matrix& cov) {
  const Eigen::Index d = y.size();
  const Vector r = y - mean;
  return -0.5 * d * std::log(2 * std::numbers::pi) - 0.5 * std::log(cov.determinant()) -
         0.5 * r.dot(cov.inverse() * r);
}

}  // namespace

TEST(RunningMoments, TwoPoints) {
  RunningMoments m(1);
  m = am_update(m, v1(0.0));
  m = am_update(m, v1(2.0));
  EXPECT_DOUBLE_EQ(m.mean()[0], 1.0);
  EXPECT_DOUBLE_EQ(m.covariance()(0, 0), 2.0);
}

TEST(RunningMoments, MatchesTwoPass) {
  Rng rng(1);
  RunningMoments m(3);
  std::vector<Vector> xs;
  for (int i = 0; i < 1000; ++i) {
    xs.push_back(rng.normal_vector(3) * 3.0 + Vector::Constant(3, 100.0));
    m.push(xs.back());
  }
  Vector mean = Vector::Zero(3);
  for (const auto& x : xs) mean += x;
  mean /= 1000.0;
  Matrix cov = Matrix::Zero(3, 3);
  for (const auto& x : xs) cov += (x - mean) * (x - mean).transpose();
  cov /= 999.0;
  EXPECT_LT((m.covariance() - cov).norm() / cov.norm(), 1e-8);
}

TEST(RunningMoments, SinglePointHasNoCovariance) {
  RunningMoments m(2);
  m.push(Vector::Zero(2));
  EXPECT_THROW(m.covariance(), DomainError);
}

TEST(AmPolicy, KeepsInitialCovarianceUntilEnoughPoints) {
  AmPolicy p(c1(4.0));
  p.observe(v1(1.0));
  EXPECT_NEAR(p.snapshot().whole().matrix()(0, 0), optimal_scale(1) * 4.0, 1e-12);
}

TEST(AmPolicy, ConstantStreamGivesRidge) {
  AmPolicy p(CovMatrix::identity(2));
  for (int i = 0; i < 50; ++i) p.observe(Vector::Constant(2, 3.0));
  const Matrix expected = optimal_scale(2) * kAmRidge * Matrix::Identity(2, 2);
  EXPECT_TRUE(p.snapshot().whole().matrix().isApprox(expected, 1e-9));
}

TEST(RaptPolicy, UpdatesOnlyTheVisitedRegion) {
  Vector n(2);
  n << 1, 1;
  RaptPolicy p({n, 0.0}, CovMatrix::identity(2), CovMatrix::identity(2), CovMatrix::identity(2),
               0.2);
  p = rapt_update(p, Vector::Constant(2, -1.0));
  EXPECT_EQ(p.region_moments[0].count(), 1);
  EXPECT_EQ(p.region_moments[1].count(), 0);
  EXPECT_EQ(p.whole_moments.count(), 1);
}

TEST(RaptPolicy, AlternatingStreamSplitsExactly) {
  Vector n(2);
  n << 1, 1;
  Vector v(2);
  v << 0.7, 1.3;
  RaptPolicy p({n, 0.0}, CovMatrix::identity(2), CovMatrix::identity(2), CovMatrix::identity(2),
               0.2);
  AmPolicy am(CovMatrix::identity(2));
  for (int i = 0; i < 100; ++i) {
    const Vector x = i % 2 == 0 ? Vector(v) : Vector(-v);
    p.observe(x);
    am.observe(x);
  }
  EXPECT_TRUE(p.region_moments[0].mean().isApprox(-v, 1e-15));
  EXPECT_TRUE(p.region_moments[1].mean().isApprox(v, 1e-15));
  EXPECT_EQ(p.whole_moments.mean(), am.moments.mean());
  EXPECT_EQ(p.whole_moments.scatter(), am.moments.scatter());
}

TEST(Policies, RejectBadAlpha) {
  Vector n = Vector::Ones(1);
  EXPECT_THROW(RaptPolicy({n, 0.0}, c1(1), c1(1), c1(1), 1.0), DomainError);
  EXPECT_THROW(RaptorPolicy(fitted_1d_mixture(), 0.0), DomainError);
}

TEST(Proposal, SingleComponentIsGaussian) {
  MixtureState m(Vector::Ones(1), {v1(0.3)}, {c1(2.0)});
  RaptorPolicy p(m, 0.3);
  const auto k = p.snapshot();
  const double eps = optimal_scale(1);
  for (double y : {-2.0, 0.1, 3.5}) {
    EXPECT_NEAR(proposal_logdensity(v1(0.5), v1(y), k),
                mvn_logpdf(v1(y), v1(0.5), c1(2.0 * eps)), 1e-12);
  }
}

TEST(Proposal, SymmetricWithinARegionWhenCovariancesAgree) {
  MixtureState m(Vector::Constant(2, 0.5), {v1(-5), v1(5)}, {c1(1.0), c1(1.0)});
  // Whole covariance differs from the local ones, but within one region the
  // two-term density is symmetric in (x, y).
  const auto k = RaptorPolicy(m, 0.4).snapshot();
  EXPECT_NEAR(proposal_logdensity(v1(1.0), v1(2.0), k), proposal_logdensity(v1(2.0), v1(1.0), k),
              1e-14);
}

TEST(Proposal, StraddlingCircularBoundaryMatchesDirectOracle) {
  Matrix s2 = 4.0 * Matrix::Identity(2, 2);
  MixtureState m(Vector::Constant(2, 0.5), {Vector::Zero(2), Vector::Zero(2)},
                 {CovMatrix::identity(2), CovMatrix(s2)});
  const double alpha = 0.3;
  const auto k = RaptorPolicy(m, alpha).snapshot();
  const double eps = optimal_scale(2);
  Vector x(2), y(2);
  x << 0.5, 0.2;  // inside the disc, region 1
  y << 2.5, 1.0;  // outside, region 2
  ASSERT_EQ(k.region(x), 0u);
  ASSERT_EQ(k.region(y), 1u);
  const Matrix whole = m.whole_cov().matrix();
  auto oracle = [&](const Vector& from, const Vector& to, const Matrix& local) {
    return std::log((1 - alpha) * std::exp(log_normal_density(to, from, eps * local)) +
                    alpha * std::exp(log_normal_density(to, from, eps * whole)));
  };
  EXPECT_NEAR(proposal_logdensity(x, y, k), oracle(x, y, Matrix::Identity(2, 2)), 1e-12);
  EXPECT_NEAR(proposal_logdensity(y, x, k), oracle(y, x, s2), 1e-12);
  EXPECT_GT(std::abs(proposal_logdensity(x, y, k) - proposal_logdensity(y, x, k)), 0.1);
}

TEST(Proposal, BranchCovariances) {
  MixtureState m(Vector::Constant(2, 0.5), {v1(-3), v1(3)}, {c1(0.5), c1(2.0)});
  const double eps = optimal_scale(1);
  const double whole = m.whole_cov().matrix()(0, 0);
  const double local = 0.5;  // x = -3 is in region 1
  for (double alpha : {1e-9, 1 - 1e-9, 0.5}) {
    const auto k = RaptorPolicy(m, alpha).snapshot();
    Rng rng(17);
    double s = 0.0, ss = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
      const double d = raptor_propose(v1(-3.0), k, rng)[0] + 3.0;
      s += d;
      ss += d * d;
    }
    const double var = ss / n - (s / n) * (s / n);
    const double expected = eps * ((1 - alpha) * local + alpha * whole);
    EXPECT_NEAR(var / expected, 1.0, 0.05) << "alpha=" << alpha;
  }
}

TEST(MhStep, EqualDensitySymmetricProposalAlwaysAccepts) {
  TargetModel flat;
  flat.dim = 1;
  flat.log_density = [](const Vector&) { return 0.0; };
  const auto k = ProposalKernel::global(c1(1.0));
  Rng rng(2);
  ChainState c = make_chain(v1(0.0), flat);
  for (int i = 0; i < 1000; ++i) c = mh_step(std::move(c), k, flat, rng);
  EXPECT_EQ(c.accept_count, 1000);
  EXPECT_EQ(c.step_count, 1000);
}

TEST(MhStep, MinusInfinityAlwaysRejects) {
  TargetModel spike;
  spike.dim = 1;
  spike.log_density = [](const Vector& x) { return x[0] == 0.0 ? 0.0 : -INFINITY; };
  const auto k = ProposalKernel::global(c1(1.0));
  Rng rng(3);
  ChainState c = make_chain(v1(0.0), spike);
  for (int i = 0; i < 500; ++i) c = mh_step(std::move(c), k, spike, rng);
  EXPECT_EQ(c.accept_count, 0);
  EXPECT_EQ(c.x[0], 0.0);
}

TEST(MhStep, NanTargetThrows) {
  TargetModel bad;
  bad.dim = 1;
  bad.log_density = [](const Vector& x) { return x[0] == 0.0 ? 0.0 : NAN; };
  Rng rng(4);
  ChainState c = make_chain(v1(0.0), bad);
  EXPECT_THROW(mh_step(c, ProposalKernel::global(c1(1.0)), bad, rng), TargetError);
}

TEST(MhStep, StartOutsideSupportThrows) {
  TargetModel spike;
  spike.dim = 1;
  spike.log_density = [](const Vector& x) { return x[0] == 0.0 ? 0.0 : -INFINITY; };
  EXPECT_THROW(make_chain(v1(1.0), spike), TargetError);
}

TEST(MhStep, OneDimensionalOptimalScaling) {
  const auto t = one_d_normal();
  const auto k = ProposalKernel::global(c1(2.38 * 2.38));
  Rng rng(5);
  ChainState c = make_chain(v1(0.0), t);
  double sum = 0.0;
  const long n = 200000;
  for (long i = 0; i < n; ++i) {
    c = mh_step(std::move(c), k, t, rng);
    sum += c.x[0];
  }
  EXPECT_NEAR(c.acceptance_rate(), 0.44, 0.03);
  EXPECT_NEAR(sum / n, 0.0, 0.02);
}

TEST(MhStep, ReproducibleUnderSeed) {
  const auto t = one_d_mixture();
  const auto k = RaptorPolicy(fitted_1d_mixture(), 0.3).snapshot();
  EXPECT_EQ(run_thinned(k, t, 5000, 1, 9), run_thinned(k, t, 5000, 1, 9));
}

// Frozen kernels leave the target invariant: thinned output against i.i.d.
// draws, two-sample KS at level 0.01.
TEST(DetailedBalance, FrozenKernelsPassKs) {
  const auto t = one_d_mixture();
  Rng oracle_rng(99);
  const auto iid = mixture_iid(5000, oracle_rng);
  const auto am = AmPolicy(c1(3.0)).snapshot();
  const auto rapt = RaptPolicy({Vector::Ones(1), 0.0}, c1(0.36), c1(1.0), c1(3.0), 0.2).snapshot();
  const auto raptor = RaptorPolicy(fitted_1d_mixture(), 0.2).snapshot();
  const std::pair<const char*, const ProposalKernel*> kernels[] = {
      {"am", &am}, {"rapt", &rapt}, {"raptor", &raptor}};
  for (const auto& [name, k] : kernels) {
    const auto chain = run_thinned(*k, t, 500000, 100, 1234);
    EXPECT_LT(ks_statistic(chain, iid), ks_critical_01(chain.size(), iid.size())) << name;
  }
}

TEST(DetailedBalance, MismatchedRegionalCovariancesNeedTheCorrection) {
  // Very different local scales on the two sides of the boundary: the
  // corrected kernel still targets the mixture.
  const auto t = one_d_mixture();
  Vector w(2);
  w << 0.5, 0.5;
  MixtureState m(w, {v1(-1.0), v1(1.0)}, {c1(0.05), c1(6.0)});
  const auto k = RaptorPolicy(m, 0.2).snapshot();
  Rng oracle_rng(7);
  const auto iid = mixture_iid(5000, oracle_rng);
  const auto chain = run_thinned(k, t, 500000, 100, 4321);
  EXPECT_LT(ks_statistic(chain, iid), ks_critical_01(chain.size(), iid.size()));
}

TEST(DetailedBalance, IdenticalComponentsBehaveLikeAm) {
  const auto t = one_d_mixture();
  MixtureState m(Vector::Constant(2, 0.5), {v1(0.3), v1(0.3)}, {c1(3.0), c1(3.0)});
  const auto raptor = RaptorPolicy(m, 0.3).snapshot();
  const auto am = AmPolicy(c1(3.0)).snapshot();
  const auto a = run_thinned(raptor, t, 300000, 60, 11);
  const auto b = run_thinned(am, t, 300000, 60, 12);
  EXPECT_LT(ks_statistic(a, b), ks_critical_01(a.size(), b.size()));
}

TEST(Banana, LongChainAgreesWithIidVariance) {
  // A milder twist than the benchmark keeps the run short.
  const BananaSpec spec{0.03, 2};
  const auto t = make_banana_target(spec);
  Matrix cov(2, 2);
  cov << 100.0, 0.0, 0.0, 19.0;
  const auto k = ProposalKernel::global(CovMatrix(Matrix(optimal_scale(2) * cov)));
  Rng rng(77);
  ChainState c = make_chain(Vector::Zero(2), t);
  const long n = 4000000;
  double s = 0.0, ss = 0.0;
  for (long i = 0; i < n; ++i) {
    c = mh_step(std::move(c), k, t, rng);
    s += c.x[0];
    ss += c.x[0] * c.x[0];
  }
  const double var = ss / n - (s / n) * (s / n);
  Rng irng(78);
  double is = 0.0, iss = 0.0;
  for (int i = 0; i < 200000; ++i) {
    const double x = banana_iid_sample(spec, irng)[0];
    is += x;
    iss += x * x;
  }
  const double ivar = iss / 200000 - (is / 200000) * (is / 200000);
  EXPECT_NEAR(var / ivar, 1.0, 0.05);
}
