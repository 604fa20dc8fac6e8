import math

import numpy as np
import pytest

import raptor_mcmc as rm


def test_mvn_logpdf_standard():
    assert rm.mvn_logpdf(np.zeros(2), np.zeros(2), np.eye(2)) == pytest.approx(-math.log(2 * math.pi))


def test_gaussmix_symmetry():
    spec = rm.GaussMixSpec(xi=0.5, d=3.0, S=1.0, dim=5)
    x = np.linspace(-1, 1, 5)
    assert rm.gaussmix_logpdf(x, spec) == pytest.approx(rm.gaussmix_logpdf(-x, spec))
    assert np.allclose(spec.target_mean(), 0.0)


def test_betabinom_normalizes():
    total = sum(math.exp(rm.betabinom_logpmf(x, 20, 0.3, 1.5)) for x in range(21))
    assert total == pytest.approx(1.0, abs=1e-10)


def test_loh_posterior_support():
    recs = rm.loh_synthetic_records()
    assert len(recs) == 40
    assert rm.loh_log_posterior(np.array([1.0, -1.0, 0.5, 31.0]), recs) == -math.inf
    assert math.isfinite(rm.loh_log_posterior(np.array([1.0, -1.0, 0.5, 3.0]), recs))


def test_pool_index():
    assert rm.pool_index(4, 3) == (1, 2)
    with pytest.raises(rm.DomainError):
        rm.pool_index(0, 3)


def test_mixture_region_and_online_em():
    m = rm.MixtureState(np.array([0.5, 0.5]), [np.array([-3.0]), np.array([3.0])], [np.eye(1), np.eye(1)])
    assert m.region(np.array([-1.0])) == 0
    rng = np.random.default_rng(1)
    xs = np.concatenate([rng.normal(-3, 1, 2000), rng.normal(3, 1, 2000)])
    rng.shuffle(xs)
    em = rm.OnlineEm(m, 100)
    em.observe_all(xs.reshape(-1, 1))
    means = sorted(mu[0] for mu in em.state.means)
    assert means[0] == pytest.approx(-3.0, abs=0.2)
    assert means[1] == pytest.approx(3.0, abs=0.2)


def test_ecdf_and_dn_hat():
    samples = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 0.0]])
    assert rm.ecdf(samples, np.array([[1.0, 1.0]]))[0] == pytest.approx(2 / 3)
    d = rm.dn_hat(samples, samples, lambda z: 0.5)
    assert d >= 0.0


def test_sample_raptor_on_bimodal_target():
    def logpdf(x):
        return float(np.logaddexp(-0.5 * np.sum((x + 2) ** 2), -0.5 * np.sum((x - 2) ** 2)))

    m = rm.MixtureState(np.array([0.5, 0.5]), [np.full(2, -2.0), np.full(2, 2.0)], [np.eye(2), np.eye(2)])
    starts = np.array([[-2.0, -2.0], [2.0, 2.0]])
    out = rm.sample(logpdf, starts, algorithm="raptor", initial_cov=np.eye(2), mixture=m,
                    alpha=0.3, iterations=2000, seed=3)
    assert out["draws"].shape == (4000, 2)
    assert 0.1 < out["acceptance_rate"] < 0.9
    assert out["mixture"].K == 2


def test_run_preset_small():
    res = rm.run("gaussmix-d3s1", replications=1, iterations=400, burn_in=200, chains=2,
                 oracle_size=100, algorithms="am,raptor")
    assert set(res) == {"am", "raptor"}
    assert 0.0 < res["raptor"]["acceptance_rate"] < 1.0


def test_bad_override_raises():
    with pytest.raises(rm.ConfigError):
        rm.run("banana5", alpha=2.0)
