"""Tail-risk and distribution-comparison metrics for damage samples.

Quantiles use linear interpolation between order statistics: for a sorted
sample ``x_1 <= ... <= x_n`` the alpha-quantile sits at 1-based position
``h = (n - 1) * alpha + 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

DEFAULT_ALPHAS = (0.90, 0.95, 0.99)


def _sample(x, name="sample") -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    if x.size == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")
    return x


def _check_alpha(alpha):
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")


def var(sample, alpha: float) -> float:
    """Value-at-Risk: the empirical alpha-quantile."""
    _check_alpha(alpha)
    x = np.sort(_sample(sample))
    h = (x.size - 1) * alpha
    lo = math.floor(h)
    hi = min(lo + 1, x.size - 1)
    return float(x[lo] + (h - lo) * (x[hi] - x[lo]))


def tvar(sample, alpha: float, full_output: bool = False):
    """Tail Value-at-Risk: mean of observations strictly above ``var(sample, alpha)``.

    If nothing exceeds VaR the result falls back to VaR itself. With
    ``full_output`` a ``(value, fell_back)`` pair is returned.
    """
    x = _sample(sample)
    v = var(x, alpha)
    tail = x[x > v]
    value, fell_back = (math.fsum(tail) / tail.size, False) if tail.size else (v, True)
    return (value, fell_back) if full_output else value


def exceedance_curve(sample, thresholds) -> np.ndarray:
    """Fraction of the sample strictly above each threshold."""
    x = np.sort(_sample(sample))
    t = np.asarray(thresholds, dtype=float).ravel()
    if t.size > 1 and np.any(np.diff(t) <= 0):
        raise ValueError("thresholds must be strictly increasing")
    return 1.0 - np.searchsorted(x, t, side="right") / x.size


def wasserstein_1d(p_sample, q_sample) -> float:
    """Order-1 Wasserstein distance between two empirical distributions.

    Equal sizes reduce to the mean absolute difference of sorted samples; in
    general the integral of ``|F_P - F_Q|`` over the merged support is used.
    """
    p = np.sort(_sample(p_sample, "p_sample"))
    q = np.sort(_sample(q_sample, "q_sample"))
    if p.size == q.size:
        return float(np.mean(np.abs(p - q)))
    grid = np.sort(np.concatenate([p, q]))
    widths = np.diff(grid)
    f_p = np.searchsorted(p, grid[:-1], side="right") / p.size
    f_q = np.searchsorted(q, grid[:-1], side="right") / q.size
    return float(np.sum(np.abs(f_p - f_q) * widths))


def dev_sym(true_damage: float, var_value: float) -> float:
    return abs(true_damage - var_value)


def dev_weighted(true_damage: float, var_value: float, over_weight: float = 2.0) -> float:
    """Squared-error deviation with weight ``over_weight`` on overestimates (VaR above truth)."""
    if not over_weight > 1:
        raise ValueError(f"over_weight must exceed 1, got {over_weight}")
    e = true_damage - var_value
    w = over_weight if e < 0 else 1.0
    return math.sqrt(w * e * e)


def dev_asym(true_damage: float, var_value: float, alpha: float) -> float:
    """Pinball loss ``max(alpha e, (alpha - 1) e)`` with ``e = truth - VaR``."""
    _check_alpha(alpha)
    e = true_damage - var_value
    return max(alpha * e, (alpha - 1) * e)


def default_thresholds(samples: Sequence, n: int = 50) -> np.ndarray:
    """Log-spaced ladder over the pooled positive range (linear if any value <= 0)."""
    pooled = np.concatenate([_sample(s) for s in samples])
    lo, hi = pooled.min(), pooled.max()
    if hi <= lo:
        return np.array([lo])
    if lo > 0:
        return np.geomspace(lo, hi, n)
    return np.linspace(lo, hi, n)


@dataclass
class ModelMetrics:
    var: dict
    tvar: dict
    tvar_fallback: dict
    exceedance: np.ndarray
    wasserstein: float | None = None
    dev_sym: dict | None = None
    dev_weighted: dict | None = None
    dev_asym: dict | None = None

    def to_dict(self) -> dict:
        out = {
            "var": _keyed(self.var),
            "tvar": _keyed(self.tvar),
            "tvar_fallback": _keyed(self.tvar_fallback),
        }
        if self.wasserstein is not None:
            out["wasserstein"] = self.wasserstein
        for name in ("dev_sym", "dev_weighted", "dev_asym"):
            val = getattr(self, name)
            if val is not None:
                out[name] = _keyed(val)
        return out


def _keyed(d: Mapping) -> dict:
    return {repr(float(a)): v for a, v in d.items()}


@dataclass
class RiskReport:
    alphas: tuple[float, ...]
    thresholds: np.ndarray
    models: dict
    truth: ModelMetrics | None = None
    truth_value: float | None = None
    over_weight: float = 2.0
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "alphas": list(self.alphas),
            "over_weight": self.over_weight,
            "models": {name: m.to_dict() for name, m in self.models.items()},
        }
        if self.truth is not None:
            out["truth"] = self.truth.to_dict()
        if self.truth_value is not None:
            out["truth_value"] = self.truth_value
        return out

    def exceedance_rows(self):
        """``(model, threshold, prob)`` rows, models in report order then truth."""
        blocks = list(self.models.items())
        if self.truth is not None:
            blocks.append(("truth", self.truth))
        for name, m in blocks:
            for t, p in zip(self.thresholds, m.exceedance):
                yield name, float(t), float(p)


def _metrics(x, alphas, thresholds) -> ModelMetrics:
    tv = {a: tvar(x, a, full_output=True) for a in alphas}
    return ModelMetrics(
        var={a: var(x, a) for a in alphas},
        tvar={a: v for a, (v, _) in tv.items()},
        tvar_fallback={a: f for a, (_, f) in tv.items()},
        exceedance=exceedance_curve(x, thresholds),
    )


def build_risk_report(models: Mapping[str, Sequence[float]], truth=None, alphas=DEFAULT_ALPHAS,
                      thresholds=None, over_weight: float = 2.0) -> RiskReport:
    """Metrics for each named predictive sample against a truth sample or value.

    A truth sample adds its own VaR/TVaR/exceedance block and a Wasserstein
    distance per model. A scalar truth adds the three VaR deviations per alpha.
    """
    if not models:
        raise ValueError("need at least one model sample")
    alphas = tuple(float(a) for a in alphas)
    for a in alphas:
        _check_alpha(a)
    samples = {name: _sample(s, f"model {name!r}") for name, s in models.items()}
    truth_sample = truth_value = None
    if truth is not None:
        if np.ndim(truth) == 0:
            truth_value = float(truth)
        else:
            truth_sample = _sample(truth, "truth")
    if thresholds is None:
        pool = list(samples.values()) + ([truth_sample] if truth_sample is not None else [])
        thresholds = default_thresholds(pool)
    thresholds = np.asarray(thresholds, dtype=float)
    report = RiskReport(alphas, thresholds, {}, truth_value=truth_value, over_weight=over_weight)
    if truth_sample is not None:
        report.truth = _metrics(truth_sample, alphas, thresholds)
    for name, x in samples.items():
        m = _metrics(x, alphas, thresholds)
        if truth_sample is not None:
            m.wasserstein = wasserstein_1d(x, truth_sample)
        if truth_value is not None:
            m.dev_sym = {a: dev_sym(truth_value, m.var[a]) for a in alphas}
            m.dev_weighted = {a: dev_weighted(truth_value, m.var[a], over_weight) for a in alphas}
            m.dev_asym = {a: dev_asym(truth_value, m.var[a], a) for a in alphas}
        report.models[name] = m
    return report
