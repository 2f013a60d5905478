import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import special

from mhbhm.damage import (
    DegenerateMeanError,
    ErrorParams,
    EventCatalog,
    EventRecord,
    ScenarioConfig,
    expected_damage,
    generate_holdout_events,
    generate_synthetic_catalog,
    log_likelihood,
    lognormal_loglik,
    scenario,
    scenario_from_dict,
    scenario_names,
    scenario_to_dict,
    simulate_damage,
    track_ridge_mean,
)
from mhbhm.grids import CrossMaternParams, ExposureField, HazardFieldSet, MaternParams, SpatialGrid
from mhbhm.vulnerability import EmanuelParams, LogisticVulnParams, VulnerabilityModel, logistic_fraction

IDENTITY = VulnerabilityModel(LogisticVulnParams(0.0, (1.0,)), ("x",))


def fields_with_fractions(fractions):
    """One-hazard field set whose identity-logistic surface equals ``fractions``."""
    g = SpatialGrid(1, len(fractions))
    return HazardFieldSet(g, ("x",), special.logit(np.asarray(fractions))[None, :])


# --- expected damage -----------------------------------------------------------


def test_expected_damage_uniform():
    f = fields_with_fractions([0.5] * 4)
    assert expected_damage(ExposureField(f.grid, np.full(4, 10.0)), f, IDENTITY) == pytest.approx(20.0, abs=1e-12)


def test_expected_damage_dot_product():
    f = fields_with_fractions([0.002473, 0.377541, 0.999089])
    e = ExposureField(f.grid, [1.0, 2.0, 3.0])
    assert expected_damage(e, f, IDENTITY) == pytest.approx(3.754822, abs=1e-9)


def test_expected_damage_zero_surface():
    g = SpatialGrid(1, 3)
    f = HazardFieldSet(g, ("wind",), np.full((1, 3), 10.0))
    model = VulnerabilityModel(EmanuelParams(25.0, 80.0), "wind")
    assert expected_damage(ExposureField(g, np.ones(3)), f, model) == 0.0


@given(st.lists(st.floats(0.01, 0.99), min_size=1, max_size=8), st.floats(0.1, 100))
def test_expected_damage_linear_in_exposure(fractions, c):
    f = fields_with_fractions(fractions)
    e = ExposureField(f.grid, np.arange(1.0, len(fractions) + 1))
    assert expected_damage(e.scaled(c), f, IDENTITY) == pytest.approx(c * expected_damage(e, f, IDENTITY), rel=1e-12)


# --- simulated damage ----------------------------------------------------------


def test_simulate_vanishing_noise():
    assert simulate_damage(42.0, ErrorParams(1e-18), 0) == pytest.approx(42.0, rel=1e-8)


def test_simulate_median_and_log_mean():
    d = simulate_damage(np.full(20_000, 50.0), ErrorParams(3.0), 9)
    assert abs(np.median(d) / 50.0 - 1) < 0.05
    assert abs(np.mean(np.log(d / 50.0))) < 4 * math.sqrt(3 / 20_000)


def test_simulate_rejects_nonpositive_mean():
    with pytest.raises(ValueError):
        simulate_damage(0.0, ErrorParams(1.0), 0)


def test_error_params_validated():
    with pytest.raises(ValueError):
        ErrorParams(0.0)


# --- likelihood ----------------------------------------------------------------


def _catalog(observed, fractions_per_event, exposure=None):
    events = []
    for i, (d, fr) in enumerate(zip(observed, fractions_per_event)):
        events.append(EventRecord(f"e{i}", fields_with_fractions(fr), d))
    g = events[0].hazards.grid
    e = ExposureField(g, np.ones(g.n_cells) if exposure is None else exposure)
    return EventCatalog(g, e, tuple(events), ("x",))


def test_loglik_zero_residual():
    cat = _catalog([1.0], [[0.25, 0.75]])
    assert log_likelihood(cat, IDENTITY, ErrorParams(2.0)) == pytest.approx(-0.5 * math.log(2 * math.pi * 2.0))


def test_loglik_additive_over_events():
    one = _catalog([3.0], [[0.3, 0.6]])
    two = _catalog([3.0, 3.0], [[0.3, 0.6], [0.3, 0.6]])
    err = ErrorParams(1.7)
    assert log_likelihood(two, IDENTITY, err) == pytest.approx(2 * log_likelihood(one, IDENTITY, err), rel=1e-14)


def test_loglik_hand_value():
    cat = _catalog([math.e * 1.0], [[0.5, 0.5]])
    assert log_likelihood(cat, IDENTITY, ErrorParams(1.0)) == pytest.approx(-1.418939, abs=1e-6)


def test_loglik_degenerate_mean():
    g = SpatialGrid(1, 2)
    f = HazardFieldSet(g, ("wind",), np.full((1, 2), 10.0))
    cat = EventCatalog(g, ExposureField(g, np.ones(2)), (EventRecord("a", f, 1.0),), ("wind",))
    with pytest.raises(DegenerateMeanError, match="zero"):
        log_likelihood(cat, VulnerabilityModel(EmanuelParams(25.0, 80.0), "wind"), ErrorParams(1.0))


@given(st.floats(-5, 5), st.floats(0.1, 5), st.floats(-50, 50))
def test_lognormal_loglik_matches_scipy(resid, var, mu):
    from scipy import stats

    expected = stats.norm(mu, math.sqrt(var)).logpdf(mu + resid)
    assert lognormal_loglik([mu + resid], [mu], var) == pytest.approx(expected, rel=1e-10, abs=1e-10)


# --- catalogs ------------------------------------------------------------------


def test_catalog_validation():
    g = SpatialGrid(1, 2)
    f = fields_with_fractions([0.5, 0.5])
    e = ExposureField(g, np.ones(2))
    with pytest.raises(ValueError, match="unique"):
        EventCatalog(g, e, (EventRecord("a", f, 1.0), EventRecord("a", f, 1.0)), ("x",))
    with pytest.raises(ValueError, match="normalization"):
        EventCatalog(g, e, (EventRecord("a", f, 1.0),), ("x",), ((0.0, 1.0),))
    with pytest.raises(ValueError):
        EventRecord("a", f, -1.0)
    with pytest.raises(ValueError, match="grid"):
        EventCatalog(SpatialGrid(2, 2), e, ())


def test_empty_catalog():
    cat = generate_synthetic_catalog(ScenarioConfig(n_events=0, n_rows=4, n_cols=4), 0)
    assert len(cat) == 0
    assert cat.hazard_array().shape == (0, 2, 16)
    assert cat.truth["params"] == {"gamma": 6.0, "beta_wind": 7.0, "beta_precip": 6.0, "sigma2": 3.0}


def test_deterministic_collapse_single_cell():
    config = ScenarioConfig(n_events=1, n_rows=1, n_cols=1, error_variance=1e-18)
    cat = generate_synthetic_catalog(config, 4)
    e = cat.events[0]
    frac = logistic_fraction(e.hazards.values[:, 0], config.vulnerability.params)
    assert e.observed_damage == pytest.approx(cat.exposure.values[0] * frac, rel=1e-8)


def test_catalog_deterministic_and_seed_sensitive():
    config = ScenarioConfig(n_events=5, n_rows=6, n_cols=6)
    a = generate_synthetic_catalog(config, 1)
    b = generate_synthetic_catalog(config, 1)
    c = generate_synthetic_catalog(config, 2)
    np.testing.assert_array_equal(a.observed(), b.observed())
    np.testing.assert_array_equal(a.hazard_array(), b.hazard_array())
    assert not np.array_equal(a.observed(), c.observed())


def test_catalog_hazards_normalized_to_unit_interval():
    cat = generate_synthetic_catalog(ScenarioConfig(n_events=20, n_rows=8, n_cols=8), 3)
    h = cat.hazard_array()
    for j in range(h.shape[1]):
        assert h[:, j].min() == pytest.approx(0.0, abs=1e-12)
        assert h[:, j].max() == pytest.approx(1.0, abs=1e-12)
    assert cat.normalization is not None


def test_events_independent_of_catalog_size():
    small = generate_synthetic_catalog(ScenarioConfig(n_events=3, n_rows=6, n_cols=6), 5)
    big = generate_synthetic_catalog(ScenarioConfig(n_events=8, n_rows=6, n_cols=6), 5)
    for e_small, e_big in zip(small.events, big.events):
        np.testing.assert_allclose(e_small.hazards.raw().values, e_big.hazards.raw().values, rtol=1e-12, atol=1e-9)


def test_holdout_uses_training_constants():
    config = ScenarioConfig(n_events=10, n_rows=6, n_cols=6)
    cat = generate_synthetic_catalog(config, 2)
    ho = generate_holdout_events(config, cat, 2, 4)
    assert len(ho) == 4 and ho.event_ids[0] == "ho0000"
    assert ho.normalization == cat.normalization
    assert set(ho.event_ids).isdisjoint(cat.event_ids)


def test_scenario_names_and_levels():
    names = scenario_names()
    assert len(names) == 9 and "medium-high" in names
    cfg = scenario("medium-high")
    assert cfg.coefficients == (7.0, 6.0) and cfg.threshold == 6.0 and cfg.error_variance == 3.0
    with pytest.raises(ValueError):
        scenario("extreme-low")


def test_scenario_dict_round_trip():
    cfg = scenario("low-medium", n_events=7, n_rows=5, n_cols=5)
    back = scenario_from_dict(scenario_to_dict(cfg))
    assert back.coefficients == cfg.coefficients
    assert back.urban_centers == cfg.urban_centers
    assert back.cross_matern == cfg.cross_matern
    np.testing.assert_array_equal(
        generate_synthetic_catalog(back, 0).observed(), generate_synthetic_catalog(cfg, 0).observed()
    )


def test_track_ridge_shape():
    g = SpatialGrid(1, 11)
    m = track_ridge_mean(g, (5.5, 0.5), math.pi / 2, 2.0, 10.0, 1.0)
    assert m[5] == pytest.approx(11.0)
    assert m[0] < m[3] < m[5] and m[10] == pytest.approx(m[0])


def test_medians_increase_with_vulnerability_over_seeds():
    levels = ["low-low", "medium-medium", "high-high"]
    wins = 0
    for seed in range(50):
        medians = [
            np.median(np.log(generate_synthetic_catalog(scenario(s, n_rows=10, n_cols=10), seed).observed()))
            for s in levels
        ]
        wins += medians[0] < medians[1] < medians[2]
    assert wins / 50 >= 0.99


def test_hazard_field_noise_uses_cross_matern():
    cm = CrossMaternParams((MaternParams(1.0, 3.0, 1.5), MaternParams(4.0, 3.0, 1.5)), ((1, 0.5), (0.5, 1)))
    cfg = ScenarioConfig(n_events=2, n_rows=4, n_cols=4, hazard_field=cm)
    assert cfg.cross_matern is cm
    assert generate_synthetic_catalog(cfg, 0).hazard_array().shape == (2, 2, 16)
