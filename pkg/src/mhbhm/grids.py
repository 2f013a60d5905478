"""Regular lattices with Gaussian random fields for exposure and hazards.

Cell centers are laid out in row-major order: linear index ``i`` maps to
``(i // n_cols, i % n_cols)`` and the center of cell ``(r, c)`` sits at
``(x0 + (c + 0.5) * cell_size, y0 + (r + 0.5) * cell_size)``.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import special
from scipy.interpolate import RegularGridInterpolator
from scipy.spatial.distance import cdist

from ._random import derive_rng

#: Closed-form Matern smoothness values; anything else goes through K_nu.
CLOSED_FORM_SMOOTHNESS = (0.5, 1.5, 2.5)

#: Relative diagonal jitter ladder, multiplied by the field variance.
JITTER_LADDER = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)


class FactorizationError(np.linalg.LinAlgError):
    """Covariance matrix could not be factorized even with maximal jitter."""


@dataclass(frozen=True)
class SpatialGrid:
    n_rows: int
    n_cols: int
    cell_size: float = 1.0
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if int(self.n_rows) < 1 or int(self.n_cols) < 1:
            raise ValueError("grid needs at least one row and one column")
        if not (np.isfinite(self.cell_size) and self.cell_size > 0):
            raise ValueError(f"cell_size must be positive, got {self.cell_size}")
        object.__setattr__(self, "n_rows", int(self.n_rows))
        object.__setattr__(self, "n_cols", int(self.n_cols))
        object.__setattr__(self, "cell_size", float(self.cell_size))
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def n_cells(self) -> int:
        return self.n_rows * self.n_cols

    @property
    def bounds(self):
        """``(xmin, ymin, xmax, ymax)`` of the lattice footprint."""
        x0, y0 = self.origin
        return (x0, y0, x0 + self.n_cols * self.cell_size, y0 + self.n_rows * self.cell_size)

    @functools.cached_property
    def cell_centers(self) -> np.ndarray:
        rows, cols = np.divmod(np.arange(self.n_cells), self.n_cols)
        x = self.origin[0] + (cols + 0.5) * self.cell_size
        y = self.origin[1] + (rows + 0.5) * self.cell_size
        return np.column_stack([x, y])

    def index(self, row, col):
        row, col = np.asarray(row), np.asarray(col)
        if np.any((row < 0) | (row >= self.n_rows) | (col < 0) | (col >= self.n_cols)):
            raise IndexError("cell outside grid")
        return row * self.n_cols + col

    def row_col(self, i):
        i = np.asarray(i)
        if np.any((i < 0) | (i >= self.n_cells)):
            raise IndexError("cell index outside grid")
        return np.divmod(i, self.n_cols)

    def distances(self) -> np.ndarray:
        """Pairwise Euclidean distances between cell centers, shape (L, L)."""
        c = self.cell_centers
        return cdist(c, c)

    def contains(self, point) -> bool:
        xmin, ymin, xmax, ymax = self.bounds
        x, y = point
        return xmin <= x <= xmax and ymin <= y <= ymax


@dataclass(frozen=True)
class MaternParams:
    variance: float
    range: float
    smoothness: float = 0.5

    def __post_init__(self):
        for name in ("variance", "range", "smoothness"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"Matern {name} must be positive and finite, got {v}")


def matern_path(smoothness: float) -> str:
    """Which evaluation route `matern_covariance` takes for this smoothness."""
    return "closed-form" if smoothness in CLOSED_FORM_SMOOTHNESS else "bessel"


def matern_covariance(d, p: MaternParams):
    """Matern covariance at distance(s) ``d``.

    Uses ``C(d) = var * 2**(1-nu) / Gamma(nu) * (d/range)**nu * K_nu(d/range)``,
    evaluated in closed form for nu in {0.5, 1.5, 2.5}:

    ====  ==================================
    nu    C(d) / var, with x = d / range
    ====  ==================================
    0.5   exp(-x)
    1.5   (1 + x) exp(-x)
    2.5   (1 + x + x**2 / 3) exp(-x)
    ====  ==================================

    Returns a float for scalar input, otherwise an array of the input shape.
    """
    d_arr = np.asarray(d, dtype=float)
    if np.any(~np.isfinite(d_arr)):
        raise ValueError("distances must be finite")
    if np.any(d_arr < 0):
        raise ValueError("distances must be nonnegative")
    x = d_arr / p.range
    nu = p.smoothness
    if nu == 0.5:
        c = np.exp(-x)
    elif nu == 1.5:
        c = (1.0 + x) * np.exp(-x)
    elif nu == 2.5:
        c = (1.0 + x + x * x / 3.0) * np.exp(-x)
    else:
        with np.errstate(invalid="ignore", over="ignore"):
            xs = np.where(x > 0, x, 1.0)
            log_c = (1.0 - nu) * np.log(2.0) - special.gammaln(nu) + nu * np.log(xs)
            c = np.exp(log_c) * special.kv(nu, xs)
        # K_nu overflows at subnormal lags, where the correlation is 1 to machine precision
        c = np.where((x > 0) & np.isfinite(c), np.minimum(c, 1.0), 1.0)
    c = p.variance * c
    return float(c) if c.ndim == 0 else c


def covariance_matrix(grid: SpatialGrid, p: MaternParams) -> np.ndarray:
    return matern_covariance(grid.distances(), p)


def cholesky_with_jitter(cov: np.ndarray, scale: float, label: str = "covariance"):
    """Lower Cholesky factor of ``cov``, escalating diagonal jitter if needed.

    Jitter starts at ``1e-10 * scale`` and grows tenfold up to ``1e-4 * scale``.
    Returns ``(factor, jitter)`` where ``jitter`` is the absolute amount added.
    """
    cov = np.asarray(cov, dtype=float)
    if not np.allclose(cov, cov.T, rtol=0, atol=1e-12 * max(scale, np.abs(cov).max(initial=0))):
        raise ValueError(f"{label} matrix is not symmetric")
    eye = np.eye(cov.shape[0])
    for rel in JITTER_LADDER:
        try:
            return np.linalg.cholesky(cov + rel * scale * eye), rel * scale
        except np.linalg.LinAlgError:
            continue
    raise FactorizationError(
        f"{label} matrix ({cov.shape[0]}x{cov.shape[0]}) is not positive definite "
        f"even with jitter {JITTER_LADDER[-1]:g} x {scale:g}; the parameters give an "
        "ill-conditioned or invalid covariance"
    )


@functools.lru_cache(maxsize=16)
def _matern_factor(grid: SpatialGrid, p: MaternParams) -> np.ndarray:
    factor, _ = cholesky_with_jitter(covariance_matrix(grid, p), p.variance, f"Matern {p}")
    return factor


def sample_gaussian_field(grid: SpatialGrid, p: MaternParams, rng_seed) -> np.ndarray:
    """One zero-mean Gaussian field draw with Matern covariance, length L."""
    rng = derive_rng(rng_seed)
    return _matern_factor(grid, p) @ rng.standard_normal(grid.n_cells)


# --- exposure ---------------------------------------------------------------


@dataclass(frozen=True)
class UrbanCenterSpec:
    """Mean exposure ``a0 + sum_k a_k exp(-phi_k |s - c_k|**2)``."""

    baseline: float = 0.0
    centers: tuple[tuple[float, float], ...] = ()
    amplitudes: tuple[float, ...] = ()
    decays: tuple[float, ...] = ()

    def __post_init__(self):
        centers = tuple((float(x), float(y)) for x, y in self.centers)
        amplitudes = tuple(float(a) for a in self.amplitudes)
        decays = tuple(float(f) for f in self.decays)
        if not (len(centers) == len(amplitudes) == len(decays)):
            raise ValueError("centers, amplitudes and decays must have equal length")
        values = np.array([self.baseline, *amplitudes, *decays, *np.ravel(centers)], dtype=float)
        if not np.all(np.isfinite(values)):
            raise ValueError("urban-center parameters must be finite")
        if any(f <= 0 for f in decays):
            raise ValueError("decay rates must be positive")
        object.__setattr__(self, "baseline", float(self.baseline))
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "amplitudes", amplitudes)
        object.__setattr__(self, "decays", decays)


def build_exposure_mean(grid: SpatialGrid, spec: UrbanCenterSpec) -> np.ndarray:
    for c in spec.centers:
        if not grid.contains(c):
            raise ValueError(f"urban center {c} lies outside the grid {grid.bounds}")
    s = grid.cell_centers
    mean = np.full(grid.n_cells, spec.baseline)
    for c, a, phi in zip(spec.centers, spec.amplitudes, spec.decays):
        sq = np.sum((s - np.asarray(c)) ** 2, axis=1)
        mean += a * np.exp(-phi * sq)
    return mean


@dataclass(frozen=True)
class ExposureField:
    grid: SpatialGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n_cells,):
            raise ValueError(f"expected {self.grid.n_cells} exposure values, got shape {v.shape}")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("exposure values must be finite and nonnegative")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def scaled(self, factor: float) -> "ExposureField":
        return ExposureField(self.grid, self.values * factor)


def sample_exposure_field(grid, spec: UrbanCenterSpec, p: MaternParams, rng_seed) -> ExposureField:
    """Exposure ``mu_E + exp(W_E)`` with ``W_E`` a Matern Gaussian field."""
    mean = build_exposure_mean(grid, spec)
    if np.any(mean < -1e-12):
        raise ValueError(
            f"urban-center mean is negative (min {mean.min():g}); exposure must be nonnegative"
        )
    w = sample_gaussian_field(grid, p, rng_seed)
    return ExposureField(grid, np.maximum(mean, 0.0) + np.exp(w))


# --- multi-hazard fields ----------------------------------------------------


@dataclass(frozen=True)
class CrossMaternParams:
    """Parsimonious cross-Matern: shared range, averaged smoothness.

    ``C_jk(d) = R[j][k] * sqrt(var_j var_k) * M(d; range, (nu_j + nu_k) / 2)``
    with ``M`` the unit-variance Matern correlation.
    """

    marginals: tuple[MaternParams, ...]
    correlation: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        marginals = tuple(self.marginals)
        if not marginals:
            raise ValueError("need at least one hazard")
        r = np.array(self.correlation, dtype=float)
        m = len(marginals)
        if r.shape != (m, m):
            raise ValueError(f"correlation must be {m}x{m}, got {r.shape}")
        if not np.allclose(r, r.T, atol=1e-12) or not np.allclose(np.diag(r), 1.0):
            raise ValueError("correlation must be symmetric with unit diagonal")
        if np.any(np.abs(r) > 1):
            raise ValueError("correlation entries must lie in [-1, 1]")
        ranges = {p.range for p in marginals}
        if len(ranges) > 1:
            raise ValueError(f"cross-Matern uses one common range, got {sorted(ranges)}")
        object.__setattr__(self, "marginals", marginals)
        object.__setattr__(self, "correlation", tuple(tuple(row) for row in r.tolist()))

    @property
    def n_hazards(self) -> int:
        return len(self.marginals)

    def pair(self, j: int, k: int) -> MaternParams:
        pj, pk = self.marginals[j], self.marginals[k]
        # sign of R[j][k] is applied separately; variance here is |sigma_jk|
        return MaternParams(
            variance=np.sqrt(pj.variance * pk.variance),
            range=pj.range,
            smoothness=0.5 * (pj.smoothness + pk.smoothness),
        )


def cross_covariance_matrix(grid: SpatialGrid, p: CrossMaternParams) -> np.ndarray:
    """Joint covariance of M stacked fields, hazard-major: block (j, k) is L x L."""
    d = grid.distances()
    L, m = grid.n_cells, p.n_hazards
    cov = np.empty((m * L, m * L))
    for j in range(m):
        for k in range(j, m):
            block = p.correlation[j][k] * matern_covariance(d, p.pair(j, k))
            cov[j * L:(j + 1) * L, k * L:(k + 1) * L] = block
            cov[k * L:(k + 1) * L, j * L:(j + 1) * L] = block.T
    return cov


@functools.lru_cache(maxsize=16)
def _cross_factor(grid: SpatialGrid, p: CrossMaternParams) -> np.ndarray:
    scale = float(np.mean([q.variance for q in p.marginals]))
    factor, _ = cholesky_with_jitter(cross_covariance_matrix(grid, p), scale, f"cross-Matern {p}")
    return factor


@dataclass(frozen=True)
class HazardFieldSet:
    """Per-cell intensities of M hazards for one event.

    ``normalization`` is None for raw physical units; otherwise one
    ``(offset, scale)`` pair per hazard with ``normalized = (raw - offset) * scale``.
    """

    grid: SpatialGrid
    names: tuple[str, ...]
    values: np.ndarray = field(repr=False)
    normalization: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        names = tuple(str(n) for n in self.names)
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate hazard names {names}")
        v = np.array(self.values, dtype=float)
        if v.ndim == 1 and len(names) == 1:
            v = v[None, :]
        if v.shape != (len(names), self.grid.n_cells):
            raise ValueError(f"expected values of shape {(len(names), self.grid.n_cells)}, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("hazard values must be finite")
        norm = self.normalization
        if norm is not None:
            norm = tuple((float(o), float(s)) for o, s in norm)
            if len(norm) != len(names):
                raise ValueError("one (offset, scale) pair per hazard required")
            if any(not (np.isfinite(o) and np.isfinite(s) and s > 0) for o, s in norm):
                raise ValueError("normalization scales must be positive and finite")
        v.flags.writeable = False
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "normalization", norm)

    @property
    def n_hazards(self) -> int:
        return len(self.names)

    @property
    def is_normalized(self) -> bool:
        return self.normalization is not None

    def hazard(self, name: str) -> np.ndarray:
        try:
            return self.values[self.names.index(name)]
        except ValueError:
            raise KeyError(f"hazard {name!r} not in {self.names}") from None

    def select(self, names: Sequence[str]) -> "HazardFieldSet":
        idx = [self.names.index(n) if n in self.names else None for n in names]
        missing = [n for n, i in zip(names, idx) if i is None]
        if missing:
            raise KeyError(f"hazards {missing} not in {self.names}")
        norm = None if self.normalization is None else tuple(self.normalization[i] for i in idx)
        return HazardFieldSet(self.grid, tuple(names), self.values[idx], norm)

    def raw(self) -> "HazardFieldSet":
        """Same fields in raw physical units."""
        return denormalize_hazards(self)

    def scaled(self, factor: float) -> "HazardFieldSet":
        return HazardFieldSet(self.grid, self.names, self.values * factor, self.normalization)


def sample_multihazard_fields(grid, means, p: CrossMaternParams, rng_seed, names=None) -> HazardFieldSet:
    """Joint draw ``H = mean + Z`` of M cross-correlated Matern fields.

    ``means`` has shape (M, L). A single-hazard call consumes the random stream
    exactly like `sample_gaussian_field`.
    """
    means = np.atleast_2d(np.asarray(means, dtype=float))
    m, L = p.n_hazards, grid.n_cells
    if means.shape != (m, L):
        raise ValueError(f"means must have shape {(m, L)}, got {means.shape}")
    if names is None:
        names = tuple(f"h{j}" for j in range(m))
    rng = derive_rng(rng_seed)
    z = _cross_factor(grid, p) @ rng.standard_normal(m * L)
    return HazardFieldSet(grid, tuple(names), means + z.reshape(m, L))


# --- normalization ----------------------------------------------------------


def minmax_constants(field_sets: Sequence[HazardFieldSet]):
    """Per-hazard ``(offset, scale)`` mapping the pooled raw range onto [0, 1]."""
    if not field_sets:
        raise ValueError("no field sets given")
    names = field_sets[0].names
    stacked = np.concatenate([fs.raw().select(names).values for fs in field_sets], axis=1)
    lo, hi = stacked.min(axis=1), stacked.max(axis=1)
    for name, a, b in zip(names, lo, hi):
        if not b > a:
            raise ValueError(f"hazard {name!r} is constant ({a:g}); min-max scaling undefined")
    return tuple((float(a), float(1.0 / (b - a))) for a, b in zip(lo, hi))


def normalize_hazards(fields: HazardFieldSet, strategy="minmax") -> HazardFieldSet:
    """Map hazards to normalized units and record the constants.

    ``strategy`` is ``"minmax"`` (this event's extrema onto [0, 1]), ``"max"``
    (offset 0, scale 1/max) or an explicit sequence of ``(offset, scale)``
    pairs, typically catalog-wide constants from `minmax_constants`.
    Already-normalized input with identical constants is returned unchanged.
    """
    if isinstance(strategy, str):
        raw = fields.raw()
        if strategy == "minmax":
            constants = minmax_constants([raw])
        elif strategy == "max":
            hi = raw.values.max(axis=1)
            if np.any(hi <= 0):
                raise ValueError("max scaling needs a positive maximum for every hazard")
            constants = tuple((0.0, float(1.0 / h)) for h in hi)
        else:
            raise ValueError(f"unknown normalization strategy {strategy!r}")
    else:
        constants = tuple((float(o), float(s)) for o, s in strategy)
    if fields.normalization == constants:
        return fields
    raw = fields.raw()
    off = np.array([c[0] for c in constants])[:, None]
    sc = np.array([c[1] for c in constants])[:, None]
    return HazardFieldSet(raw.grid, raw.names, (raw.values - off) * sc, constants)


def denormalize_hazards(fields: HazardFieldSet) -> HazardFieldSet:
    if fields.normalization is None:
        return fields
    off = np.array([c[0] for c in fields.normalization])[:, None]
    sc = np.array([c[1] for c in fields.normalization])[:, None]
    return HazardFieldSet(fields.grid, fields.names, fields.values / sc + off, None)


def resample_to_grid(values, src: SpatialGrid, dst: SpatialGrid) -> np.ndarray:
    """Bilinearly resample a row-major field from ``src`` onto ``dst`` cell centers.

    Points outside the source cell-center hull take the nearest edge value.
    """
    values = np.asarray(values, dtype=float).reshape(src.n_rows, src.n_cols)
    x0, y0 = src.origin
    xs = x0 + (np.arange(src.n_cols) + 0.5) * src.cell_size
    ys = y0 + (np.arange(src.n_rows) + 0.5) * src.cell_size
    pts = dst.cell_centers
    pts = np.column_stack([np.clip(pts[:, 1], ys[0], ys[-1]), np.clip(pts[:, 0], xs[0], xs[-1])])
    if src.n_rows == 1 or src.n_cols == 1:
        method = "nearest"
    else:
        method = "linear"
    interp = RegularGridInterpolator((ys, xs), values, method=method)
    return interp(pts)
