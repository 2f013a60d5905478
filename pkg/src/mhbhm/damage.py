"""Event damage under a log-normal observation model, plus synthetic catalogs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from ._random import derive_rng
from .grids import (
    CrossMaternParams,
    ExposureField,
    HazardFieldSet,
    MaternParams,
    SpatialGrid,
    UrbanCenterSpec,
    normalize_hazards,
    sample_exposure_field,
    sample_multihazard_fields,
)
from .vulnerability import LogisticVulnParams, VulnerabilityModel, vulnerability_surface


class DegenerateMeanError(ValueError):
    """Expected damage is zero, so the log-damage mean is undefined."""


@dataclass(frozen=True)
class ErrorParams:
    """Variance of the additive error on log damage."""

    variance: float

    def __post_init__(self):
        if not (math.isfinite(self.variance) and self.variance > 0):
            raise ValueError(f"error variance must be positive, got {self.variance}")


@dataclass(frozen=True)
class EventRecord:
    event_id: str
    hazards: HazardFieldSet
    observed_damage: float | None = None

    def __post_init__(self):
        d = self.observed_damage
        if d is not None and not (math.isfinite(d) and d > 0):
            raise ValueError(f"event {self.event_id}: observed damage must be positive, got {d}")


@dataclass(frozen=True)
class EventCatalog:
    """Events that share a grid, an event-invariant exposure field and the
    hazard normalization constants."""

    grid: SpatialGrid
    exposure: ExposureField
    events: tuple[EventRecord, ...] = ()
    hazard_names: tuple[str, ...] = ()
    normalization: tuple[tuple[float, float], ...] | None = None
    truth: dict | None = field(default=None, compare=False)

    def __post_init__(self):
        events = tuple(self.events)
        if self.exposure.grid != self.grid:
            raise ValueError("exposure grid differs from catalog grid")
        ids = [e.event_id for e in events]
        if len(set(ids)) != len(ids):
            raise ValueError("event ids must be unique")
        for e in events:
            if e.hazards.grid != self.grid:
                raise ValueError(f"event {e.event_id} is on a different grid")
            if self.hazard_names and e.hazards.names != tuple(self.hazard_names):
                raise ValueError(f"event {e.event_id} has hazards {e.hazards.names}, expected {self.hazard_names}")
            if e.hazards.normalization != self.normalization:
                raise ValueError(f"event {e.event_id} normalization differs from the catalog's")
        object.__setattr__(self, "events", events)
        object.__setattr__(self, "hazard_names", tuple(self.hazard_names))

    def __len__(self):
        return len(self.events)

    @property
    def event_ids(self) -> list[str]:
        return [e.event_id for e in self.events]

    def event(self, event_id: str) -> EventRecord:
        for e in self.events:
            if e.event_id == event_id:
                return e
        raise KeyError(f"no event {event_id!r} in catalog")

    def observed(self) -> np.ndarray:
        missing = [e.event_id for e in self.events if e.observed_damage is None]
        if missing:
            raise ValueError(f"events without observed damage: {missing[:5]}")
        return np.array([e.observed_damage for e in self.events], dtype=float)

    def hazard_array(self, names: Sequence[str] | None = None) -> np.ndarray:
        """Stacked hazards of shape (N, M, L) in the order of ``names``."""
        names = self.hazard_names if names is None else tuple(names)
        if not self.events:
            return np.zeros((0, len(names), self.grid.n_cells))
        return np.stack([e.hazards.select(names).values for e in self.events])


def expected_damage(exposure: ExposureField, fields: HazardFieldSet, model: VulnerabilityModel) -> float:
    """Sum over cells of exposure times fraction lost."""
    if exposure.grid != fields.grid:
        raise ValueError("exposure and hazard fields live on different grids")
    return float(exposure.values @ vulnerability_surface(model, fields))


def simulate_damage(expected, err: ErrorParams, rng_seed, size=None):
    """Damage ``expected * exp(eps)`` with ``eps ~ N(0, variance)``."""
    expected = np.asarray(expected, dtype=float)
    if np.any(~(expected > 0)):
        raise ValueError("expected damage must be positive")
    rng = derive_rng(rng_seed)
    eps = rng.normal(0.0, math.sqrt(err.variance), size=size if size is not None else expected.shape)
    out = expected * np.exp(eps)
    return float(out) if np.ndim(out) == 0 else out


def log_likelihood(catalog: EventCatalog, model: VulnerabilityModel, err: ErrorParams) -> float:
    """Sum of normal log densities of log observed damage around log expected damage."""
    d = catalog.observed()
    mu = np.array([expected_damage(catalog.exposure, e.hazards, model) for e in catalog.events])
    zero = [e.event_id for e, m in zip(catalog.events, mu) if not m > 0]
    if zero:
        raise DegenerateMeanError(f"expected damage is zero for events {zero[:5]}; log mean undefined")
    return lognormal_loglik(np.log(d), np.log(mu), err.variance)


def lognormal_loglik(log_d, log_mu, variance) -> float:
    resid = np.asarray(log_d) - np.asarray(log_mu)
    n = resid.size
    return float(-0.5 * n * math.log(2 * math.pi * variance) - 0.5 * np.sum(resid ** 2) / variance)


# --- synthetic catalogs -----------------------------------------------------

#: Logistic coefficients per vulnerability level, keyed by hazard.
SCENARIO_LEVELS = {
    "wind": {"low": 5.0, "medium": 7.0, "high": 9.0},
    "precip": {"low": 2.0, "medium": 4.0, "high": 6.0},
}


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to regenerate a synthetic catalog from a seed.

    Raw hazards are in physical units (wind m/s, precipitation mm). Each event
    places a straight storm track across the grid; mean intensity decays as a
    Gaussian ridge with distance from the track, and cross-correlated Matern
    noise is added on top.
    """

    n_events: int = 113
    n_rows: int = 20
    n_cols: int = 20
    cell_size: float = 1.0
    threshold: float = 6.0
    coefficients: tuple[float, ...] = (7.0, 6.0)
    error_variance: float = 3.0
    hazard_names: tuple[str, ...] = ("wind", "precip")
    exposure: UrbanCenterSpec | None = None
    exposure_field: MaternParams = MaternParams(variance=0.5, range=3.0, smoothness=0.5)
    hazard_field: CrossMaternParams | None = None
    peak_ranges: tuple[tuple[float, float], ...] = ((0.0, 75.0), (0.0, 400.0))
    background: tuple[float, ...] = (2.0, 5.0)
    width_ranges: tuple[tuple[float, float], ...] = ((5.0, 12.0), (6.0, 14.0))
    decay_ranges: tuple[tuple[float, float] | None, ...] | None = ((5.0, 15.0), None)

    def __post_init__(self):
        if self.n_events < 0:
            raise ValueError("n_events must be nonnegative")
        m = len(self.hazard_names)
        for name in ("coefficients", "peak_ranges", "background", "width_ranges", "decay_ranges"):
            if getattr(self, name) is not None and len(getattr(self, name)) != m:
                raise ValueError(f"{name} needs one entry per hazard ({m})")
        object.__setattr__(self, "coefficients", tuple(float(b) for b in self.coefficients))
        ErrorParams(self.error_variance)

    @property
    def grid(self) -> SpatialGrid:
        return SpatialGrid(self.n_rows, self.n_cols, self.cell_size)

    @property
    def urban_centers(self) -> UrbanCenterSpec:
        if self.exposure is not None:
            return self.exposure
        x0, y0, x1, y1 = self.grid.bounds
        w, h = x1 - x0, y1 - y0
        return UrbanCenterSpec(
            baseline=6.0,
            centers=((x0 + 0.3 * w, y0 + 0.35 * h), (x0 + 0.75 * w, y0 + 0.7 * h)),
            amplitudes=(20.0, 8.0),
            decays=(40.0 / w ** 2, 80.0 / w ** 2),
        )

    @property
    def cross_matern(self) -> CrossMaternParams:
        if self.hazard_field is not None:
            return self.hazard_field
        sds = [0.08 * (hi + lo) / 2 for lo, hi in self.peak_ranges]
        m = len(self.hazard_names)
        r = np.full((m, m), 0.5)
        np.fill_diagonal(r, 1.0)
        return CrossMaternParams(
            tuple(MaternParams(s * s, 3.0 * self.cell_size, 1.5) for s in sds),
            tuple(map(tuple, r)),
        )

    @property
    def vulnerability(self) -> VulnerabilityModel:
        return VulnerabilityModel(LogisticVulnParams(self.threshold, self.coefficients), self.hazard_names)

    def truth(self) -> dict:
        out = {"gamma": self.threshold}
        out.update({f"beta_{n}": b for n, b in zip(self.hazard_names, self.coefficients)})
        out["sigma2"] = self.error_variance
        return out


def scenario(name: str, **overrides) -> ScenarioConfig:
    """Config for a named ``<wind level>-<precip level>`` scenario, e.g. ``"medium-high"``."""
    try:
        wind, precip = name.split("-")
        coef = (SCENARIO_LEVELS["wind"][wind], SCENARIO_LEVELS["precip"][precip])
    except (ValueError, KeyError):
        levels = "|".join(SCENARIO_LEVELS["wind"])
        raise ValueError(f"scenario must look like '<{levels}>-<{levels}>', got {name!r}") from None
    return ScenarioConfig(coefficients=coef, **overrides)


def scenario_names() -> list[str]:
    return [f"{w}-{p}" for w in SCENARIO_LEVELS["wind"] for p in SCENARIO_LEVELS["precip"]]


def track_ridge_mean(grid: SpatialGrid, point, angle, width, peak, background, decay_length=math.inf) -> np.ndarray:
    """Intensity falling off as a Gaussian in distance from a straight track.

    The track runs through ``point`` with direction ``angle``; downstream of
    ``point`` the peak decays exponentially with e-folding ``decay_length``.
    """
    s = grid.cell_centers - np.asarray(point, dtype=float)
    along = s @ np.array([math.cos(angle), math.sin(angle)])
    across = s @ np.array([-math.sin(angle), math.cos(angle)])
    ridge = peak * np.exp(-0.5 * (across / width) ** 2)
    if math.isfinite(decay_length):
        ridge = ridge * np.exp(-np.maximum(along, 0.0) / decay_length)
    return background + ridge


def _raw_event_hazards(config: ScenarioConfig, seed, key) -> HazardFieldSet:
    grid = config.grid
    rng = derive_rng(seed, *key, "track")
    x0, y0, x1, y1 = grid.bounds
    point = (rng.uniform(x0, x1), rng.uniform(y0, y1))
    angle = rng.uniform(0.0, math.pi)
    decays = config.decay_ranges or (None,) * len(config.hazard_names)
    means = []
    for (plo, phi), bg, (wlo, whi), dr in zip(config.peak_ranges, config.background, config.width_ranges, decays):
        peak = rng.uniform(plo, phi)
        width = rng.uniform(wlo, whi) * grid.cell_size
        decay = math.inf if dr is None else rng.uniform(*dr) * grid.cell_size
        means.append(track_ridge_mean(grid, point, angle, width, peak, bg, decay))
    fields = sample_multihazard_fields(
        grid, np.array(means), config.cross_matern, derive_rng(seed, *key, "field"), config.hazard_names
    )
    # physical intensities are nonnegative
    return HazardFieldSet(grid, fields.names, np.maximum(fields.values, 0.0))


def _simulate_events(config, seed, exposure, raw_fields, constants, prefix, key0):
    model = config.vulnerability
    err = ErrorParams(config.error_variance)
    events = []
    for i, raw in enumerate(raw_fields):
        fields = normalize_hazards(raw, constants)
        mu = expected_damage(exposure, fields, model)
        d = simulate_damage(mu, err, derive_rng(seed, key0, i, "noise"))
        events.append(EventRecord(f"{prefix}{i:04d}", fields, d))
    return tuple(events)


def _catalog_constants(raw: Sequence[HazardFieldSet], names) -> tuple[tuple[float, float], ...]:
    """Catalog-wide min-max constants; a hazard constant over the whole catalog
    keeps unit scale and maps to 0."""
    if not raw:
        return tuple((0.0, 1.0) for _ in names)
    stacked = np.concatenate([r.values for r in raw], axis=1)
    lo, hi = stacked.min(axis=1), stacked.max(axis=1)
    return tuple((float(a), 1.0 if b == a else float(1.0 / (b - a))) for a, b in zip(lo, hi))


def generate_synthetic_catalog(config: ScenarioConfig, rng_seed: int) -> EventCatalog:
    """Simulate ``config.n_events`` events with their hazards and log-normal damages.

    Hazards are min-max normalized with catalog-wide extrema. Ground truth goes
    into ``catalog.truth``. Every event draws from its own keyed random stream.
    """
    grid = config.grid
    exposure = sample_exposure_field(
        grid, config.urban_centers, config.exposure_field, derive_rng(rng_seed, "exposure")
    )
    raw = [_raw_event_hazards(config, rng_seed, ("event", i)) for i in range(config.n_events)]
    constants = _catalog_constants(raw, config.hazard_names)
    events = _simulate_events(config, rng_seed, exposure, raw, constants, "ev", "event")
    truth = {"params": config.truth(), "seed": int(rng_seed), "config": scenario_to_dict(config)}
    return EventCatalog(grid, exposure, events, config.hazard_names, constants, truth)


def generate_holdout_events(config: ScenarioConfig, catalog: EventCatalog, rng_seed: int, n: int) -> EventCatalog:
    """Held-out events from the same generator, normalized with the training
    catalog's constants. Each carries one simulated damage as its truth."""
    raw = [_raw_event_hazards(config, rng_seed, ("holdout", i)) for i in range(n)]
    events = _simulate_events(config, rng_seed, catalog.exposure, raw, catalog.normalization, "ho", "holdout")
    return replace(catalog, events=events)


def scenario_to_dict(config: ScenarioConfig) -> dict:
    uc = config.urban_centers
    cm = config.cross_matern
    return {
        "n_events": config.n_events,
        "n_rows": config.n_rows,
        "n_cols": config.n_cols,
        "cell_size": config.cell_size,
        "threshold": config.threshold,
        "coefficients": list(config.coefficients),
        "error_variance": config.error_variance,
        "hazard_names": list(config.hazard_names),
        "exposure": {
            "baseline": uc.baseline,
            "centers": [list(c) for c in uc.centers],
            "amplitudes": list(uc.amplitudes),
            "decays": list(uc.decays),
        },
        "exposure_field": _matern_dict(config.exposure_field),
        "hazard_field": {
            "marginals": [_matern_dict(p) for p in cm.marginals],
            "correlation": [list(r) for r in cm.correlation],
        },
        "peak_ranges": [list(r) for r in config.peak_ranges],
        "background": list(config.background),
        "width_ranges": [list(r) for r in config.width_ranges],
        "decay_ranges": None if config.decay_ranges is None else [
            None if r is None else list(r) for r in config.decay_ranges
        ],
    }


def scenario_from_dict(d: dict) -> ScenarioConfig:
    d = dict(d)
    if "exposure" in d:
        e = d["exposure"]
        d["exposure"] = UrbanCenterSpec(
            e["baseline"], tuple(map(tuple, e["centers"])), tuple(e["amplitudes"]), tuple(e["decays"])
        )
    if "exposure_field" in d:
        d["exposure_field"] = MaternParams(**d["exposure_field"])
    if "hazard_field" in d:
        h = d["hazard_field"]
        d["hazard_field"] = CrossMaternParams(
            tuple(MaternParams(**p) for p in h["marginals"]), tuple(map(tuple, h["correlation"]))
        )
    for key in ("coefficients", "hazard_names", "background"):
        if key in d:
            d[key] = tuple(d[key])
    for key in ("peak_ranges", "width_ranges"):
        if key in d:
            d[key] = tuple(map(tuple, d[key]))
    if d.get("decay_ranges") is not None:
        d["decay_ranges"] = tuple(None if r is None else tuple(r) for r in d["decay_ranges"])
    return ScenarioConfig(**d)


def _matern_dict(p: MaternParams) -> dict:
    return {"variance": p.variance, "range": p.range, "smoothness": p.smoothness}
