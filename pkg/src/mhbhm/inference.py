"""Random-walk Metropolis-Hastings for the logistic multi-hazard damage model.

The sampled parameter vector is ``(gamma, beta_<h1>, ..., beta_<hM>, sigma2)``
for the hazards the model uses. Exposure and hazard fields are known inputs.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import special

from ._random import derive_rng
from .damage import EventCatalog


# --- priors -----------------------------------------------------------------


@dataclass(frozen=True)
class Gamma:
    """Gamma distribution in the shape-rate parameterization (mean shape / rate)."""

    shape: float
    rate: float

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise ValueError(f"Gamma needs positive shape and rate, got {self.shape}, {self.rate}")

    def logpdf(self, x: float) -> float:
        if not x > 0:
            return -math.inf
        a, b = self.shape, self.rate
        return a * math.log(b) + (a - 1) * math.log(x) - b * x - special.gammaln(a)

    def sample(self, rng) -> float:
        return float(rng.gamma(self.shape, 1.0 / self.rate))

    def to_dict(self):
        return {"dist": "gamma", "shape": self.shape, "rate": self.rate}


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"Uniform needs lo < hi, got {self.lo}, {self.hi}")

    def logpdf(self, x: float) -> float:
        if not self.lo <= x <= self.hi:
            return -math.inf
        return -math.log(self.hi - self.lo)

    def sample(self, rng) -> float:
        return float(rng.uniform(self.lo, self.hi))

    def to_dict(self):
        return {"dist": "uniform", "lo": self.lo, "hi": self.hi}


def prior_from_dict(d: Mapping):
    kind = d["dist"]
    if kind == "gamma":
        return Gamma(float(d["shape"]), float(d["rate"]))
    if kind == "uniform":
        return Uniform(float(d["lo"]), float(d["hi"]))
    raise ValueError(f"unknown prior {kind!r}")


PriorSpec = Mapping[str, "Gamma | Uniform"]


def default_priors(hazards: Sequence[str]) -> dict:
    """``gamma ~ U(5, 15)``, ``beta_h ~ Gam(5, 1)`` and ``sigma2 ~ Gam(2, 0.5)``."""
    priors = {"gamma": Uniform(5.0, 15.0)}
    priors.update({f"beta_{h}": Gamma(5.0, 1.0) for h in hazards})
    priors["sigma2"] = Gamma(2.0, 0.5)
    return priors


def log_prior(theta, priors: PriorSpec, names: Sequence[str] | None = None) -> float:
    """Sum of prior log densities; ``-inf`` outside the support.

    ``theta`` is a mapping of name to value, or a vector ordered like ``names``.
    """
    if not isinstance(theta, Mapping):
        if names is None:
            raise ValueError("parameter names are required for a vector theta")
        theta = dict(zip(names, theta))
    unknown = set(theta) - set(priors)
    if unknown:
        raise KeyError(f"no prior for parameters {sorted(unknown)}")
    total = 0.0
    for name, value in theta.items():
        total += priors[name].logpdf(float(value))
        if total == -math.inf:
            break
    return total


# --- targets ----------------------------------------------------------------


class LogPosterior:
    """Unnormalized log posterior ``loglik(theta) + log_prior(theta)``."""

    def __init__(self, param_names: Sequence[str], priors: PriorSpec, loglik: Callable | None = None):
        self.param_names = tuple(param_names)
        missing = set(self.param_names) - set(priors)
        if missing:
            raise KeyError(f"no prior for parameters {sorted(missing)}")
        self.priors = {n: priors[n] for n in self.param_names}
        self._loglik = loglik

    def loglik(self, theta: np.ndarray) -> float:
        """Log likelihood; a target built without one is the prior alone."""
        return 0.0 if self._loglik is None else self._loglik(theta)

    def __call__(self, theta) -> float:
        lp = log_prior(theta, self.priors, self.param_names)
        if lp == -math.inf:
            return lp
        ll = self.loglik(np.asarray(theta, dtype=float))
        return lp + ll if math.isfinite(ll) else -math.inf

    def sample_prior(self, rng) -> np.ndarray:
        return np.array([self.priors[n].sample(rng) for n in self.param_names])


@dataclass(frozen=True)
class ModelFamily:
    """Which hazards enter the logistic vulnerability."""

    hazards: tuple[str, ...]

    @classmethod
    def from_name(cls, name: str, catalog_hazards: Sequence[str]) -> "ModelFamily":
        """``"multi"`` uses every hazard; ``"<h>-only"`` uses just hazard ``h``."""
        if name == "multi":
            return cls(tuple(catalog_hazards))
        if name.endswith("-only") and name[:-5] in catalog_hazards:
            return cls((name[:-5],))
        options = ["multi"] + [f"{h}-only" for h in catalog_hazards]
        raise ValueError(f"unknown model family {name!r}; choose from {options}")

    @property
    def name(self) -> str:
        return f"{self.hazards[0]}-only" if len(self.hazards) == 1 else "multi"

    @property
    def param_names(self) -> tuple[str, ...]:
        return ("gamma", *(f"beta_{h}" for h in self.hazards), "sigma2")


def log_expected_damages(exposure, hazards, gamma, beta) -> np.ndarray:
    """``log(sum_s E(s) V(H_i(s)))`` per event, vectorized over events.

    ``hazards`` has shape (M, N, L); ``exposure`` shape (L,).
    """
    scores = np.tensordot(beta, hazards, axes=1) - gamma
    with np.errstate(divide="ignore"):
        return np.log(special.expit(scores) @ exposure)


class CatalogPosterior(LogPosterior):
    """Posterior of the logistic model given a catalog with known exposure and hazards.

    Per-event expected damages are cached by ``(gamma, beta)`` so moves that
    only change ``sigma2`` skip the L-cell sums.
    """

    def __init__(self, catalog: EventCatalog, family: ModelFamily, priors: PriorSpec | None = None):
        if priors is None:
            priors = default_priors(family.hazards)
        super().__init__(family.param_names, priors)
        if len(catalog) == 0:
            raise ValueError("cannot fit an empty catalog")
        self.family = family
        self.log_d = np.log(catalog.observed())
        self.exposure = np.asarray(catalog.exposure.values)
        self.hazards = np.ascontiguousarray(np.moveaxis(catalog.hazard_array(family.hazards), 1, 0))
        self._cache: dict = {}

    def log_means(self, theta) -> np.ndarray:
        key = tuple(theta[:-1])
        hit = self._cache.get(key)
        if hit is None:
            hit = log_expected_damages(self.exposure, self.hazards, theta[0], np.asarray(theta[1:-1]))
            if len(self._cache) >= 4:
                self._cache.pop(next(iter(self._cache)))
            self._cache[key] = hit
        return hit

    def loglik(self, theta) -> float:
        log_mu = self.log_means(theta)
        if not np.all(np.isfinite(log_mu)):
            return -math.inf
        s2 = theta[-1]
        r = self.log_d - log_mu
        return -0.5 * r.size * math.log(2 * math.pi * s2) - 0.5 * float(r @ r) / s2

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_cache"] = {}
        return state


# --- sampler ----------------------------------------------------------------


def metropolis_accept(log_ratio: float, rng) -> bool:
    """Accept with probability ``min(1, exp(log_ratio))``; always draws one uniform."""
    u = rng.random()
    if math.isnan(log_ratio) or log_ratio == -math.inf:
        return False
    return log_ratio >= 0 or math.log(u) < log_ratio


def mh_step(theta, log_post: float, target: Callable, half_width: float, rng):
    """One joint random-walk step with ``U(theta_i - w, theta_i + w)`` proposals.

    Returns ``(theta, log_post, accepted)``; on rejection the input state is
    returned unchanged.
    """
    theta = np.asarray(theta, dtype=float)
    proposal = theta + rng.uniform(-half_width, half_width, size=theta.shape)
    lp_new = target(proposal)
    if metropolis_accept(lp_new - log_post, rng):
        return proposal, lp_new, True
    return theta, log_post, False


@dataclass
class Chain:
    draws: np.ndarray
    log_posterior: np.ndarray
    n_accepted: int
    seed: int

    @property
    def acceptance_rate(self) -> float:
        steps = len(self.draws) - 1
        return self.n_accepted / steps if steps else 0.0


def _initial_state(target, initial, rng, max_attempts):
    if initial is not None:
        theta = np.asarray(initial, dtype=float)
        lp = target(theta)
        if math.isfinite(lp):
            return theta, lp
    for _ in range(max_attempts):
        theta = target.sample_prior(rng)
        lp = target(theta)
        if math.isfinite(lp):
            return theta, lp
    raise RuntimeError(f"no initial value with finite log posterior after {max_attempts} prior draws")


def run_chain(target: LogPosterior, n_iter: int, half_width: float = 0.5, seed=0,
              initial=None, max_init_attempts: int = 100) -> Chain:
    """Run one chain of ``n_iter`` states; the first state is the initial value.

    Without ``initial`` (or if it has zero posterior density), the start is
    drawn from the priors.
    """
    if n_iter < 1:
        raise ValueError("n_iter must be positive")
    rng = derive_rng(seed)
    theta, lp = _initial_state(target, initial, rng, max_init_attempts)
    draws = np.empty((n_iter, theta.size))
    lps = np.empty(n_iter)
    draws[0], lps[0] = theta, lp
    accepted = 0
    for t in range(1, n_iter):
        theta, lp, ok = mh_step(theta, lp, target, half_width, rng)
        accepted += ok
        draws[t], lps[t] = theta, lp
    return Chain(draws, lps, accepted, int(seed) if isinstance(seed, (int, np.integer)) else -1)


@dataclass(frozen=True)
class McmcConfig:
    n_chains: int = 3
    n_iter: int = 5000
    burn_in: int = 2000
    proposal_half_width: float = 0.5
    seed: int = 0
    seeds: tuple[int, ...] | None = None
    initial_values: tuple[tuple[float, ...], ...] | None = None
    thin: int = 1
    workers: int = 1
    max_init_attempts: int = 100

    def __post_init__(self):
        if self.n_chains < 1:
            raise ValueError("need at least one chain")
        if self.n_iter < 1 or not 0 <= self.burn_in < self.n_iter:
            raise ValueError("need n_iter >= 1 and 0 <= burn_in < n_iter")
        if not self.proposal_half_width > 0:
            raise ValueError("proposal half-width must be positive")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.seeds is not None:
            if len(self.seeds) != self.n_chains or len(set(self.seeds)) != self.n_chains:
                raise ValueError("need one distinct seed per chain")
        if self.initial_values is not None and len(self.initial_values) != self.n_chains:
            raise ValueError("need one initial value per chain")

    def chain_seeds(self) -> tuple[int, ...]:
        if self.seeds is not None:
            return tuple(int(s) for s in self.seeds)
        ss = np.random.SeedSequence(int(self.seed))
        return tuple(int(c.generate_state(1, np.uint32)[0]) for c in ss.spawn(self.n_chains))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seeds"] = list(self.chain_seeds())
        if self.initial_values is not None:
            d["initial_values"] = [list(v) for v in self.initial_values]
        return d

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class PosteriorSamples:
    """Per-chain draws (including burn-in) with provenance."""

    param_names: tuple[str, ...]
    chains: list[np.ndarray]
    burn_in: int
    acceptance_rates: list[float]
    provenance: dict = field(default_factory=dict)
    thin: int = 1

    def __post_init__(self):
        self.param_names = tuple(self.param_names)
        for c in self.chains:
            if c.ndim != 2 or c.shape[1] != len(self.param_names):
                raise ValueError("each chain must be an (n_iter, P) array")
        if any(not 0 <= a <= 1 for a in self.acceptance_rates):
            raise ValueError("acceptance rates must lie in [0, 1]")

    @property
    def n_chains(self) -> int:
        return len(self.chains)

    def kept(self) -> list[np.ndarray]:
        """Post-burn-in (and thinned) draws per chain."""
        return [c[self.burn_in::self.thin] for c in self.chains]

    def pooled(self) -> np.ndarray:
        kept = self.kept()
        if not kept or sum(len(k) for k in kept) == 0:
            raise ValueError("no post-burn-in draws")
        return np.concatenate(kept, axis=0)

    def column(self, name: str) -> np.ndarray:
        return self.pooled()[:, self.param_names.index(name)]

    @property
    def hazards(self) -> tuple[str, ...]:
        return tuple(n[5:] for n in self.param_names if n.startswith("beta_"))


def _run_indexed_chain(args):
    target, cfg, seed, init = args
    return run_chain(target, cfg.n_iter, cfg.proposal_half_width, seed, init, cfg.max_init_attempts)


def run_mcmc(catalog: EventCatalog | LogPosterior, family: ModelFamily | None = None,
             priors: PriorSpec | None = None, config: McmcConfig = McmcConfig()) -> PosteriorSamples:
    """Run ``config.n_chains`` independent chains and collect them.

    ``catalog`` may also be a ready-made `LogPosterior`, in which case
    ``family`` and ``priors`` are ignored.
    """
    if isinstance(catalog, LogPosterior):
        target = catalog
        provenance = {}
    else:
        if family is None:
            family = ModelFamily(catalog.hazard_names)
        target = CatalogPosterior(catalog, family, priors)
        provenance = {
            "family": family.name,
            "hazards": list(family.hazards),
            "catalog_hazards": list(catalog.hazard_names),
            "normalization": None if catalog.normalization is None else [list(c) for c in catalog.normalization],
            "n_events": len(catalog),
            "catalog_id": catalog_fingerprint(catalog),
        }
    provenance["config_hash"] = config.hash()
    seeds = config.chain_seeds()
    inits = config.initial_values or (None,) * config.n_chains
    jobs = [(target, config, s, i) for s, i in zip(seeds, inits)]
    chains = []
    if config.workers > 1 and config.n_chains > 1:
        with ProcessPoolExecutor(max_workers=min(config.workers, config.n_chains)) as pool:
            futures = [pool.submit(_run_indexed_chain, job) for job in jobs]
            for k, fut in enumerate(futures):
                try:
                    chains.append(fut.result())
                except Exception as exc:
                    raise RuntimeError(f"chain {k} failed: {exc}") from exc
    else:
        for k, job in enumerate(jobs):
            try:
                chains.append(_run_indexed_chain(job))
            except Exception as exc:
                raise RuntimeError(f"chain {k} failed: {exc}") from exc
    return PosteriorSamples(
        target.param_names,
        [c.draws for c in chains],
        config.burn_in,
        [c.acceptance_rate for c in chains],
        provenance,
        config.thin,
    )


def catalog_fingerprint(catalog: EventCatalog) -> str:
    h = hashlib.sha256()
    h.update(np.asarray(catalog.exposure.values).tobytes())
    for e in catalog.events:
        h.update(e.event_id.encode())
        h.update(e.hazards.values.tobytes())
        h.update(repr(e.observed_damage).encode())
    return h.hexdigest()[:16]


# --- diagnostics ------------------------------------------------------------


def gelman_rubin(samples: PosteriorSamples | Sequence[np.ndarray], split: bool = False) -> dict:
    """Potential scale reduction factor per parameter.

    Classical form ``sqrt(((n-1)/n W + B/n) / W)`` over post-burn-in draws, with
    W the mean within-chain variance and B/n the variance of chain means. With
    ``split=True`` each chain is halved first. Zero within-chain variance gives
    ``inf`` (or 1.0 if the chains also agree exactly).
    """
    if isinstance(samples, PosteriorSamples):
        chains, names = samples.kept(), samples.param_names
    else:
        chains = [np.atleast_2d(np.asarray(c, dtype=float).T).T for c in samples]
        names = tuple(f"p{j}" for j in range(chains[0].shape[1]))
    if len(chains) < 2:
        raise ValueError("Gelman-Rubin needs at least 2 chains; run with n_chains >= 2")
    n = min(len(c) for c in chains)
    chains = [c[:n] for c in chains]
    if split:
        half = n // 2
        chains = [part for c in chains for part in (c[:half], c[half:2 * half])]
        n = half
    if n < 10:
        raise ValueError(f"need at least 10 post-burn-in draws per chain, got {n}")
    x = np.stack(chains)  # (m, n, P)
    means = x.mean(axis=1)
    w = x.var(axis=1, ddof=1).mean(axis=0)
    b_over_n = means.var(axis=0, ddof=1)
    out = {}
    for j, name in enumerate(names):
        if w[j] == 0:
            out[name] = 1.0 if b_over_n[j] == 0 else math.inf
        else:
            out[name] = float(np.sqrt(((n - 1) / n * w[j] + b_over_n[j]) / w[j]))
    return out


@dataclass(frozen=True)
class ParamSummary:
    mean: float
    median: float
    sd: float
    q025: float
    q975: float
    rhat: float | None = None

    def covers(self, value: float) -> bool:
        return self.q025 <= value <= self.q975


@dataclass(frozen=True)
class DiagnosticsReport:
    params: dict

    def __getitem__(self, name) -> ParamSummary:
        return self.params[name]

    @property
    def max_rhat(self) -> float | None:
        vals = [p.rhat for p in self.params.values() if p.rhat is not None]
        return max(vals) if vals else None

    def converged(self, limit: float = 1.1) -> bool:
        return self.max_rhat is not None and self.max_rhat <= limit

    def to_dict(self) -> dict:
        return {name: asdict(p) for name, p in self.params.items()}

    def table(self, truth: Mapping | None = None) -> str:
        head = ["Parameter"] + (["True"] if truth else []) + ["Mean", "Median", "Std Dev", "2.5%", "97.5%", "Rhat"]
        rows = [head]
        for name, p in self.params.items():
            row = [name] + ([f"{truth[name]:.4g}"] if truth else [])
            row += [f"{v:.5g}" for v in (p.mean, p.median, p.sd, p.q025, p.q975)]
            row.append("-" if p.rhat is None else f"{p.rhat:.4f}")
            rows.append(row)
        widths = [max(len(r[i]) for r in rows) for i in range(len(head))]
        return "\n".join("  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in rows)


def summarize(samples: PosteriorSamples, split_rhat: bool = False) -> DiagnosticsReport:
    """Pooled post-burn-in mean, median, SD, 95% interval and R-hat per parameter.

    Quantiles interpolate linearly between order statistics. R-hat is None for
    a single chain.
    """
    pooled = samples.pooled()
    rhat = gelman_rubin(samples, split_rhat) if samples.n_chains >= 2 else {}
    params = {}
    for j, name in enumerate(samples.param_names):
        x = pooled[:, j]
        q025, q50, q975 = np.quantile(x, [0.025, 0.5, 0.975])
        params[name] = ParamSummary(
            float(x.mean()),
            float(q50),
            float(x.std(ddof=1)) if x.size > 1 else 0.0,
            float(q025),
            float(q975),
            rhat.get(name),
        )
    return DiagnosticsReport(params)
