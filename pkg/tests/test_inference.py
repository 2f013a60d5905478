import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from mhbhm.damage import ScenarioConfig, generate_synthetic_catalog, log_likelihood, ErrorParams
from mhbhm.inference import (
    CatalogPosterior,
    Gamma,
    LogPosterior,
    McmcConfig,
    ModelFamily,
    PosteriorSamples,
    Uniform,
    default_priors,
    gelman_rubin,
    log_expected_damages,
    log_prior,
    metropolis_accept,
    mh_step,
    prior_from_dict,
    run_chain,
    run_mcmc,
    summarize,
)
from mhbhm.vulnerability import LogisticVulnParams, VulnerabilityModel


def batch_means_se(x, n_batches=50):
    """Monte Carlo standard error of the mean of a correlated series."""
    x = np.asarray(x)
    b = len(x) // n_batches
    means = x[: b * n_batches].reshape(n_batches, b).mean(axis=1)
    return means.std(ddof=1) / math.sqrt(n_batches)


@pytest.fixture(scope="module")
def small_catalog():
    return generate_synthetic_catalog(ScenarioConfig(n_events=30, n_rows=8, n_cols=8), 3)


# --- priors --------------------------------------------------------------------


def test_uniform_prior_values():
    u = Uniform(5.0, 15.0)
    assert u.logpdf(4.9) == -math.inf
    assert u.logpdf(7.0) == pytest.approx(math.log(0.1), abs=1e-15)
    assert u.logpdf(7.0) == pytest.approx(-2.302585, abs=1e-6)


def test_gamma_prior_hand_value():
    assert Gamma(5.0, 1.0).logpdf(5.0) == pytest.approx(4 * math.log(5) - 5 - math.log(24), abs=1e-13)
    assert Gamma(5.0, 1.0).logpdf(5.0) == pytest.approx(-1.740302, abs=1e-6)
    assert Gamma(2.0, 0.5).logpdf(0.0) == -math.inf


@given(st.floats(0.1, 10), st.floats(0.1, 10), st.floats(1e-3, 50))
def test_gamma_logpdf_matches_scipy_shape_rate(shape, rate, x):
    expected = stats.gamma(shape, scale=1 / rate).logpdf(x)
    assert Gamma(shape, rate).logpdf(x) == pytest.approx(expected, rel=1e-9, abs=1e-9)


def test_gamma_prior_means_are_shape_over_rate():
    rng = np.random.default_rng(0)
    draws = [Gamma(2.0, 0.5).sample(rng) for _ in range(20_000)]
    assert np.mean(draws) == pytest.approx(4.0, rel=0.03)


def test_default_priors_and_dict_round_trip():
    priors = default_priors(["wind", "precip"])
    assert list(priors) == ["gamma", "beta_wind", "beta_precip", "sigma2"]
    for p in priors.values():
        assert prior_from_dict(p.to_dict()) == p


def test_log_prior_sums_and_support():
    priors = default_priors(["wind"])
    names = ("gamma", "beta_wind", "sigma2")
    expected = math.log(0.1) + Gamma(5, 1).logpdf(5.0) + Gamma(2, 0.5).logpdf(3.0)
    assert log_prior([7.0, 5.0, 3.0], priors, names) == pytest.approx(expected)
    assert log_prior([7.0, -1.0, 3.0], priors, names) == -math.inf
    with pytest.raises(KeyError):
        log_prior({"delta": 1.0}, priors)


# --- model families and targets -------------------------------------------------


def test_model_family_names():
    multi = ModelFamily.from_name("multi", ("wind", "precip"))
    wind = ModelFamily.from_name("wind-only", ("wind", "precip"))
    assert multi.param_names == ("gamma", "beta_wind", "beta_precip", "sigma2")
    assert wind.param_names == ("gamma", "beta_wind", "sigma2") and wind.name == "wind-only"
    with pytest.raises(ValueError, match="choose from"):
        ModelFamily.from_name("surge-only", ("wind", "precip"))


def test_catalog_posterior_matches_reference_likelihood(small_catalog):
    target = CatalogPosterior(small_catalog, ModelFamily(("wind", "precip")))
    theta = np.array([6.5, 6.0, 5.0, 2.5])
    model = VulnerabilityModel(LogisticVulnParams(6.5, (6.0, 5.0)), ("wind", "precip"))
    ref = log_likelihood(small_catalog, model, ErrorParams(2.5))
    assert target.loglik(theta) == pytest.approx(ref, rel=1e-12)
    lp = log_prior(theta, target.priors, target.param_names)
    assert target(theta) == pytest.approx(ref + lp, rel=1e-12)
    assert target(np.array([4.0, 6.0, 5.0, 2.5])) == -math.inf


def test_single_hazard_target_omits_other_beta(small_catalog):
    target = CatalogPosterior(small_catalog, ModelFamily.from_name("wind-only", small_catalog.hazard_names))
    assert target.param_names == ("gamma", "beta_wind", "sigma2")
    model = VulnerabilityModel(LogisticVulnParams(6.0, (7.0,)), ("wind",))
    ref = log_likelihood(small_catalog, model, ErrorParams(3.0))
    assert target.loglik(np.array([6.0, 7.0, 3.0])) == pytest.approx(ref, rel=1e-12)


def test_log_expected_damages_vectorized():
    exposure = np.array([1.0, 2.0])
    hazards = np.array([[[0.0, 1.0], [1.0, 0.0]]])  # (M=1, N=2, L=2)
    out = log_expected_damages(exposure, hazards, 0.0, np.array([1.0]))
    s = 1 / (1 + np.exp(-np.array([0.0, 1.0])))
    np.testing.assert_allclose(np.exp(out), [s @ exposure, s[::-1] @ exposure], rtol=1e-14)


# --- sampler mechanics -----------------------------------------------------------


def test_accept_nonnegative_ratio_always():
    rng = np.random.default_rng(0)
    assert all(metropolis_accept(0.0, rng) for _ in range(1000))
    assert all(metropolis_accept(3.0, rng) for _ in range(1000))
    assert not any(metropolis_accept(-math.inf, rng) for _ in range(1000))


@given(st.floats(-5, 5), st.floats(-100, 100))
def test_accept_invariant_to_constant_shift(log_ratio, shift):
    a = metropolis_accept((log_ratio + shift) - shift, np.random.default_rng(1))
    b = metropolis_accept(log_ratio, np.random.default_rng(1))
    assert a == b


def test_proposal_outside_support_rejected():
    priors = {"gamma": Uniform(5.0, 15.0)}
    target = LogPosterior(("gamma",), priors)
    rng = np.random.default_rng(0)
    for _ in range(2000):
        theta, _, _ = mh_step(np.array([5.01]), target(np.array([5.01])), target, 0.5, rng)
        assert theta[0] >= 5.0


def test_proposal_is_joint_uniform_box():
    target = LogPosterior(("a", "b"), {"a": Uniform(-100, 100), "b": Uniform(-100, 100)})
    rng = np.random.default_rng(2)
    steps = []
    theta = np.zeros(2)
    lp = target(theta)
    for _ in range(5000):
        new, lp, ok = mh_step(theta, lp, target, 0.5, rng)
        assert ok
        steps.append(new - theta)
        theta = new
    steps = np.array(steps)
    assert np.all(np.abs(steps) <= 0.5)
    assert np.all(steps != 0)  # both components move every iteration
    assert stats.kstest(steps[:, 0], stats.uniform(-0.5, 1).cdf).pvalue > 1e-3


def test_acceptance_rate_standard_normal_target():
    target = LogPosterior(("x",), {"x": Uniform(-50, 50)}, lambda t: -0.5 * float(t[0]) ** 2)
    chain = run_chain(target, 20_000, 0.5, seed=4, initial=[0.0])
    assert 0.7 < chain.acceptance_rate < 0.95


def test_chain_length_one_is_initial():
    target = LogPosterior(("x",), {"x": Uniform(-1, 1)})
    chain = run_chain(target, 1, seed=0, initial=[0.25])
    np.testing.assert_array_equal(chain.draws, [[0.25]])


def test_chain_deterministic():
    target = LogPosterior(("x",), {"x": Uniform(-5, 5)}, lambda t: -0.5 * float(t[0]) ** 2)
    a = run_chain(target, 500, seed=9)
    b = run_chain(target, 500, seed=9)
    np.testing.assert_array_equal(a.draws, b.draws)


def test_no_finite_start_raises():
    target = LogPosterior(("x",), {"x": Uniform(-1, 1)}, lambda t: -math.inf)
    with pytest.raises(RuntimeError, match="initial value"):
        run_chain(target, 10, max_init_attempts=5)


def test_three_state_detailed_balance():
    weights = np.array([1.0, 2.0, 3.0])
    target = LogPosterior(
        ("x",), {"x": Uniform(0.0, 3.0)}, lambda t: math.log(weights[min(int(t[0]), 2)])
    )
    chain = run_chain(target, 200_000, 0.5, seed=21, initial=[1.5])
    states = np.minimum(chain.draws[:, 0].astype(int), 2)
    occupancy = np.bincount(states, minlength=3) / len(states)
    assert np.all(np.abs(occupancy - weights / weights.sum()) <= 0.02)
    flows = np.zeros((3, 3))
    np.add.at(flows, (states[:-1], states[1:]), 1)
    flows /= len(states) - 1
    assert np.all(np.abs(flows - flows.T) <= 0.02)


def test_conjugate_normal_posterior():
    rng = np.random.default_rng(8)
    y = rng.normal(1.3, 1.0, size=20)
    target = LogPosterior(("mu",), {"mu": Uniform(-100, 100)}, lambda t: -0.5 * float(np.sum((y - t[0]) ** 2)))
    chain = run_chain(target, 100_000, 0.5, seed=5, initial=[0.0])
    x = chain.draws[5000:, 0]
    se_mean = batch_means_se(x)
    assert abs(x.mean() - y.mean()) <= 3 * se_mean
    sq = (x - y.mean()) ** 2
    assert abs(sq.mean() - 1 / 20) <= 3 * batch_means_se(sq)


# --- multi-chain runs ----------------------------------------------------------


def test_run_mcmc_chains_distinct_and_reproducible(small_catalog):
    cfg = McmcConfig(n_chains=3, n_iter=200, burn_in=50, seed=1)
    a = run_mcmc(small_catalog, None, None, cfg)
    b = run_mcmc(small_catalog, None, None, cfg)
    for ca, cb in zip(a.chains, b.chains):
        np.testing.assert_array_equal(ca, cb)
    assert not np.array_equal(a.chains[0], a.chains[1])
    assert a.provenance["family"] == "multi" and a.provenance["config_hash"] == cfg.hash()
    assert all(0 <= r <= 1 for r in a.acceptance_rates)


def test_single_chain_matches_run_chain(small_catalog):
    cfg = McmcConfig(n_chains=1, n_iter=100, burn_in=10, seed=3)
    samples = run_mcmc(small_catalog, None, None, cfg)
    target = CatalogPosterior(small_catalog, ModelFamily(small_catalog.hazard_names))
    chain = run_chain(target, 100, 0.5, cfg.chain_seeds()[0])
    np.testing.assert_array_equal(samples.chains[0], chain.draws)


def test_parallel_chains_identical_to_serial(small_catalog):
    serial = run_mcmc(small_catalog, None, None, McmcConfig(n_chains=2, n_iter=60, burn_in=10, seed=2))
    parallel = run_mcmc(small_catalog, None, None, McmcConfig(n_chains=2, n_iter=60, burn_in=10, seed=2, workers=2))
    for a, b in zip(serial.chains, parallel.chains):
        np.testing.assert_array_equal(a, b)


def test_draws_respect_prior_support(small_catalog):
    s = run_mcmc(small_catalog, None, None, McmcConfig(n_chains=2, n_iter=300, burn_in=0, seed=5))
    for c in s.chains:
        assert np.all((c[:, 0] >= 5) & (c[:, 0] <= 15))
        assert np.all(c[:, 1:] > 0)


def test_mcmc_config_validation():
    with pytest.raises(ValueError):
        McmcConfig(n_iter=100, burn_in=100)
    with pytest.raises(ValueError):
        McmcConfig(n_chains=2, seeds=(1, 1))
    assert McmcConfig().n_chains == 3 and McmcConfig().n_iter == 5000 and McmcConfig().burn_in == 2000


# --- diagnostics ----------------------------------------------------------------


def test_rhat_iid_chains_near_one():
    rng = np.random.default_rng(0)
    chains = [rng.normal(size=3000) for _ in range(3)]
    r = gelman_rubin(chains)["p0"]
    assert 0.99 <= r <= 1.05


def test_rhat_constant_chains_diverge():
    r = gelman_rubin([np.zeros(100), np.ones(100)])["p0"]
    assert r == math.inf
    assert gelman_rubin([np.ones(100), np.ones(100)])["p0"] == 1.0


def test_rhat_separated_chains_large():
    rng = np.random.default_rng(1)
    r = gelman_rubin([rng.normal(0, 1, 500), rng.normal(5, 1, 500)])["p0"]
    assert r > 2


def test_rhat_duplicated_chain_two_pass_oracle():
    rng = np.random.default_rng(3)
    c = rng.normal(size=400)
    n = len(c)
    mean = sum(c) / n
    w = sum((v - mean) ** 2 for v in c) / (n - 1)
    b = 0.0  # identical chain means
    oracle = math.sqrt(((n - 1) / n * w + b / n) / w)
    r = gelman_rubin([c, c.copy()])["p0"]
    assert r == pytest.approx(oracle, rel=1e-12)
    assert r < 1


def test_rhat_needs_two_chains():
    with pytest.raises(ValueError, match="at least 2 chains"):
        gelman_rubin([np.zeros(50)])


def test_split_rhat_detects_trend():
    rng = np.random.default_rng(4)
    trend = [np.linspace(0, 5, 1000) + rng.normal(size=1000) for _ in range(2)]
    assert gelman_rubin(trend, split=True)["p0"] > gelman_rubin(trend)["p0"]
    assert gelman_rubin(trend, split=True)["p0"] > 1.1


def _samples(chains, burn_in=0, names=("a",)):
    chains = [np.asarray(c, dtype=float).reshape(len(c), -1) for c in chains]
    return PosteriorSamples(names, chains, burn_in, [0.5] * len(chains))


def test_summary_constant_chain():
    rep = summarize(_samples([np.full(50, 2.5), np.full(50, 2.5)]))
    p = rep["a"]
    assert p.mean == p.median == p.q025 == p.q975 == 2.5 and p.sd == 0.0


def test_summary_quantiles_linear_interpolation():
    rep = summarize(_samples([np.arange(1.0, 51.0), np.arange(51.0, 101.0)]))
    assert rep["a"].q025 == pytest.approx(3.475, abs=1e-12)
    assert rep["a"].q975 == pytest.approx(97.525, abs=1e-12)


def test_summary_burn_in_and_report():
    s = _samples([np.r_[np.full(10, 100.0), np.zeros(40)], np.r_[np.full(10, 100.0), np.ones(40)]], burn_in=10)
    rep = summarize(s)
    assert rep["a"].mean == pytest.approx(0.5)
    assert not rep.converged()
    text = rep.table({"a": 0.5})
    assert "Rhat" in text and "True" in text
    assert set(rep.to_dict()["a"]) >= {"mean", "median", "sd", "q025", "q975", "rhat"}


def test_posterior_samples_validation():
    with pytest.raises(ValueError):
        PosteriorSamples(("a",), [np.zeros((5, 2))], 0, [0.5])
    with pytest.raises(ValueError):
        PosteriorSamples(("a",), [np.zeros((5, 1))], 0, [1.5])
