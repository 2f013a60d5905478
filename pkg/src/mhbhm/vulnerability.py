"""Vulnerability functions: hazard intensity -> fraction of exposed value lost."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import special

from .grids import HazardFieldSet


@dataclass(frozen=True)
class EmanuelParams:
    """Damage power function ``v**3 / (1 + v**3)``."""

    v_thresh: float
    v_half: float

    def __post_init__(self):
        if not (math.isfinite(self.v_thresh) and math.isfinite(self.v_half)):
            raise ValueError("Emanuel parameters must be finite")
        if not 0 <= self.v_thresh < self.v_half:
            raise ValueError(f"need 0 <= v_thresh < v_half, got {self.v_thresh}, {self.v_half}")


@dataclass(frozen=True)
class LogNormalVulnParams:
    median: float
    dispersion: float

    def __post_init__(self):
        if not math.isfinite(self.median):
            raise ValueError("median parameter must be finite")
        if not (math.isfinite(self.dispersion) and self.dispersion > 0):
            raise ValueError(f"dispersion must be positive, got {self.dispersion}")


@dataclass(frozen=True)
class LogisticVulnParams:
    """Multi-hazard logistic ``1 / (1 + exp(threshold - coef . h))``."""

    threshold: float
    coefficients: tuple[float, ...]

    def __post_init__(self):
        coef = tuple(float(b) for b in np.atleast_1d(self.coefficients))
        if not coef:
            raise ValueError("need at least one coefficient")
        if not (math.isfinite(self.threshold) and all(math.isfinite(b) for b in coef)):
            raise ValueError("logistic parameters must be finite")
        object.__setattr__(self, "threshold", float(self.threshold))
        object.__setattr__(self, "coefficients", coef)


VulnParams = Union[EmanuelParams, LogNormalVulnParams, LogisticVulnParams]

_FAMILIES = {
    EmanuelParams: "emanuel",
    LogNormalVulnParams: "lognormal",
    LogisticVulnParams: "logistic",
}


def _check_finite(x):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("hazard intensities must be finite")
    return x


def _scalar_or_array(x):
    return float(x) if np.ndim(x) == 0 else x


def emanuel_fraction(v_o, p: EmanuelParams):
    v_o = _check_finite(v_o)
    v = np.maximum(v_o - p.v_thresh, 0.0) / (p.v_half - p.v_thresh)
    v3 = v ** 3
    with np.errstate(over="ignore", invalid="ignore"):
        f = np.where(np.isinf(v3), 1.0, v3 / (1.0 + v3))
    return _scalar_or_array(f)


def standard_normal_cdf(x):
    """Phi(x) = erfc(-x / sqrt(2)) / 2, accurate in both tails."""
    return 0.5 * special.erfc(-np.asarray(x, dtype=float) / math.sqrt(2.0))


def lognormal_fraction(h, p: LogNormalVulnParams):
    h = _check_finite(h)
    if np.any(h <= 0):
        raise ValueError("log-normal vulnerability needs strictly positive intensity")
    return _scalar_or_array(standard_normal_cdf((np.log(h) - p.median) / p.dispersion))


def sigmoid(z):
    """Logistic function ``1 / (1 + exp(-z))``, overflow-free in both tails."""
    return special.expit(np.asarray(z, dtype=float))


def logistic_fraction(h, p: LogisticVulnParams):
    """Fraction lost for hazard vector(s) ``h``; last axis indexes hazards."""
    h = _check_finite(h)
    beta = np.asarray(p.coefficients)
    if h.shape[-1:] != beta.shape:
        raise ValueError(f"hazard vector length {h.shape[-1:]} does not match {len(beta)} coefficients")
    return _scalar_or_array(sigmoid(h @ beta - p.threshold))


@dataclass(frozen=True)
class VulnerabilityModel:
    """One vulnerability family plus the hazard label(s) it consumes.

    Emanuel and log-normal models read exactly one hazard by name. A logistic
    model reads ``hazards`` in order, or every hazard of the field set in its
    stored order when ``hazards`` is None.
    """

    params: VulnParams
    hazards: tuple[str, ...] | None = None

    def __post_init__(self):
        if type(self.params) not in _FAMILIES:
            raise TypeError(f"unsupported vulnerability parameters {type(self.params).__name__}")
        hz = self.hazards
        if isinstance(hz, str):
            hz = (hz,)
        if hz is not None:
            hz = tuple(hz)
        if self.family != "logistic" and (hz is None or len(hz) != 1):
            raise ValueError(f"{self.family} vulnerability needs exactly one named hazard")
        if self.family == "logistic" and hz is not None and len(hz) != len(self.params.coefficients):
            raise ValueError("number of hazards does not match number of coefficients")
        object.__setattr__(self, "hazards", hz)

    @property
    def family(self) -> str:
        return _FAMILIES[type(self.params)]

    def to_dict(self) -> dict:
        if self.family == "emanuel":
            params = {"v_thresh": self.params.v_thresh, "v_half": self.params.v_half}
        elif self.family == "lognormal":
            params = {"median": self.params.median, "dispersion": self.params.dispersion}
        else:
            params = {"threshold": self.params.threshold, "coefficients": list(self.params.coefficients)}
        out = {"family": self.family, "params": params}
        if self.family != "logistic":
            out["hazard"] = self.hazards[0]
        elif self.hazards is not None:
            out["hazards"] = list(self.hazards)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "VulnerabilityModel":
        family, params = d["family"], d["params"]
        if family == "emanuel":
            p = EmanuelParams(float(params["v_thresh"]), float(params["v_half"]))
        elif family == "lognormal":
            p = LogNormalVulnParams(float(params["median"]), float(params["dispersion"]))
        elif family == "logistic":
            p = LogisticVulnParams(float(params["threshold"]), tuple(params["coefficients"]))
        else:
            raise ValueError(f"unknown vulnerability family {family!r}")
        hazards = d.get("hazards")
        if "hazard" in d:
            hazards = (d["hazard"],)
        return cls(p, None if hazards is None else tuple(hazards))


def vulnerability_surface(model: VulnerabilityModel, fields: HazardFieldSet) -> np.ndarray:
    """Per-cell fraction lost, length L."""
    if model.family == "logistic":
        names = model.hazards if model.hazards is not None else fields.names
        if len(names) != len(model.params.coefficients):
            raise ValueError(
                f"logistic model has {len(model.params.coefficients)} coefficients "
                f"but field set has hazards {fields.names}"
            )
        h = fields.select(names).values.T
        return np.asarray(logistic_fraction(h, model.params), dtype=float).reshape(-1)
    h = fields.hazard(model.hazards[0])
    if model.family == "emanuel":
        return np.asarray(emanuel_fraction(h, model.params), dtype=float).reshape(-1)
    return np.asarray(lognormal_fraction(h, model.params), dtype=float).reshape(-1)
