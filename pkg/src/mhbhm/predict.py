"""Posterior predictive damage for new events, plus deterministic baselines."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special

from ._random import derive_rng
from .damage import ErrorParams, expected_damage, simulate_damage
from .grids import ExposureField, HazardFieldSet
from .inference import PosteriorSamples
from .vulnerability import EmanuelParams, emanuel_fraction


@dataclass(frozen=True)
class PredictiveSample:
    event_id: str
    damages: np.ndarray = field(repr=False)
    provenance: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        d = np.asarray(self.damages, dtype=float)
        if d.ndim != 1 or d.size == 0:
            raise ValueError("predictive sample must be a non-empty vector")
        if not np.all(d > 0):
            raise ValueError("predictive damages must be positive")
        object.__setattr__(self, "damages", d)

    def __len__(self):
        return self.damages.size

    def summary(self, true_damage: float | None = None) -> dict:
        q = np.quantile(self.damages, [0.05, 0.25, 0.5, 0.75, 0.95])
        out = {
            "event_id": self.event_id,
            "n": int(self.damages.size),
            "median": float(q[2]),
            "mean": float(self.damages.mean()),
            "interval_50": [float(q[1]), float(q[3])],
            "interval_90": [float(q[0]), float(q[4])],
        }
        if true_damage is not None:
            out["true_damage"] = float(true_damage)
            out["percentile_of_truth"] = percentile_of_truth(self, true_damage)
        return out


def _check_event(posterior: PosteriorSamples, fields: HazardFieldSet):
    hazards = posterior.hazards
    missing = [h for h in hazards if h not in fields.names]
    if missing:
        raise ValueError(f"event lacks hazards {missing} used in training (event has {fields.names})")
    trained = posterior.provenance.get("normalization")
    if trained is None:
        raise ValueError("posterior carries no hazard normalization metadata")
    if fields.normalization is None:
        raise ValueError("event hazards are not normalized; normalize with the training constants first")
    train_names = posterior.provenance.get("catalog_hazards", list(hazards))
    for h in hazards:
        want = tuple(trained[train_names.index(h)])
        got = fields.normalization[fields.names.index(h)]
        if not np.allclose(want, got, rtol=1e-12, atol=0):
            raise ValueError(f"hazard {h!r} normalized with {got}, training used {want}")


def posterior_predict(posterior: PosteriorSamples, exposure: ExposureField, fields: HazardFieldSet,
                      rng_seed, event_id: str = "event", draws: int | None = None,
                      chunk: int = 2048) -> PredictiveSample:
    """Composition sampling: one damage ``mu(theta) * exp(eps)`` per retained draw.

    ``mu(theta)`` is the expected damage under posterior draw ``theta`` and
    ``eps ~ N(0, sigma2(theta))``. All post-burn-in draws from every chain are
    used unless ``draws`` asks for a reproducible subsample.
    """
    _check_event(posterior, fields)
    if exposure.grid != fields.grid:
        raise ValueError("exposure and event hazards live on different grids")
    theta = posterior.pooled()
    if draws is not None:
        if draws < 1:
            raise ValueError("draws must be positive")
        if draws < len(theta):
            idx = np.sort(derive_rng(rng_seed, "subsample").choice(len(theta), draws, replace=False))
            theta = theta[idx]
    hazards = fields.select(posterior.hazards).values  # (M, L)
    gamma, beta, s2 = theta[:, 0], theta[:, 1:-1], theta[:, -1]
    mu = np.empty(len(theta))
    for a in range(0, len(theta), chunk):
        b = a + chunk
        scores = beta[a:b] @ hazards - gamma[a:b, None]
        mu[a:b] = special.expit(scores) @ exposure.values
    eps = derive_rng(rng_seed, "error").standard_normal(len(theta)) * np.sqrt(s2)
    provenance = {
        "posterior": posterior.provenance.get("config_hash"),
        "family": posterior.provenance.get("family"),
        "seed": rng_seed if isinstance(rng_seed, int) else None,
        "draws": int(len(theta)),
    }
    return PredictiveSample(event_id, mu * np.exp(eps), provenance)


def percentile_of_truth(sample, true_damage: float) -> float:
    """Empirical CDF at the truth, ties counted half: ``(n_less + n_equal / 2) / n``."""
    x = sample.damages if isinstance(sample, PredictiveSample) else np.asarray(sample, dtype=float)
    if x.size == 0:
        raise ValueError("empty predictive sample")
    less = np.count_nonzero(x < true_damage)
    equal = np.count_nonzero(x == true_damage)
    return (less + 0.5 * equal) / x.size


@dataclass(frozen=True)
class DeterministicBaseline:
    """Emanuel damage function with fixed, published parameters."""

    params: EmanuelParams
    label: str = "custom"
    hazard: str = "wind"


BALDWIN = DeterministicBaseline(EmanuelParams(25.0, 80.0), "baldwin")
EBERENZ = DeterministicBaseline(EmanuelParams(25.7, 84.7), "eberenz")
BASELINES = {b.label: b for b in (BALDWIN, EBERENZ)}


def baseline_predict(baseline: DeterministicBaseline, exposure: ExposureField, fields: HazardFieldSet) -> float:
    """Point estimate ``sum_s E(s) f(wind(s))`` on raw physical wind speeds.

    Normalized fields are mapped back to physical units with their recorded
    constants before the damage function is applied.
    """
    if baseline.hazard not in fields.names:
        raise ValueError(f"baseline needs hazard {baseline.hazard!r}; event has {fields.names}")
    if exposure.grid != fields.grid:
        raise ValueError("exposure and event hazards live on different grids")
    wind = fields.raw().hazard(baseline.hazard)
    f = emanuel_fraction(wind, baseline.params)
    return float(exposure.values @ np.asarray(f))


def truth_damage_sample(exposure: ExposureField, fields: HazardFieldSet, model, error_variance: float,
                        rng_seed, n: int = 10_000) -> np.ndarray:
    """Damages drawn from the generating model itself, for comparing predictive samples."""
    mu = expected_damage(exposure, fields, model)
    return simulate_damage(np.full(n, mu), ErrorParams(error_variance), rng_seed)


def empirical_interval(sample, level: float) -> tuple[float, float]:
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    x = sample.damages if isinstance(sample, PredictiveSample) else np.asarray(sample, dtype=float)
    tail = (1 - level) / 2
    lo, hi = np.quantile(x, [tail, 1 - tail])
    return float(lo), float(hi)

