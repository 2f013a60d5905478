"""Command-line driver: simulate, fit, diagnose, predict, metrics, baseline.

Every option can also come from a TOML file (``--config run.toml``) holding a
table per subcommand, e.g. ``[fit]`` with ``chains = 3``; flags win over the
file. Each run writes ``resolved_config.json`` next to its outputs.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import io
from .damage import (
    DegenerateMeanError,
    generate_holdout_events,
    generate_synthetic_catalog,
    scenario,
    scenario_from_dict,
    scenario_names,
)
from .grids import FactorizationError
from .inference import (
    McmcConfig,
    ModelFamily,
    default_priors,
    gelman_rubin,
    prior_from_dict,
    run_mcmc,
    summarize,
)
from .predict import BASELINES, DeterministicBaseline, baseline_predict, posterior_predict, truth_damage_sample
from .risk import DEFAULT_ALPHAS, build_risk_report
from .vulnerability import EmanuelParams

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

RHAT_WARN = 1.1


class ConfigError(ValueError):
    pass


# option name -> built-in default, per command; None means "required"
DEFAULTS = {
    "simulate": {"scenario": "medium-high", "n": 113, "n_holdout": 0, "truth_draws": 10_000,
                 "grid": 20, "seed": None, "out": None},
    "fit": {"catalog": None, "model": "multi", "chains": 3, "iter": 5000, "burn_in": 2000,
            "half_width": 0.5, "thin": 1, "workers": 1, "seed": None, "out": None},
    "diagnose": {"posterior": None, "split": False, "out": None},
    "predict": {"posterior": None, "catalog": None, "event": None, "truth": None, "draws": None,
                "seed": None, "out": None},
    "metrics": {"model": None, "truth": None, "truth_value": None, "alpha": ",".join(map(str, DEFAULT_ALPHAS)),
                "over_weight": 2.0, "out": None},
    "baseline": {"catalog": None, "event": None, "model": "baldwin", "v_thresh": None, "v_half": None,
                 "truth": None, "out": None},
}
OPTIONAL = {"truth", "draws", "truth_value", "v_thresh", "v_half"}
# commands that have somewhere sensible to write when --out is absent
OPTIONAL_OUT = {"diagnose", "baseline"}


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mhbhm", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help):
        sp = sub.add_parser(name, help=help)
        sp.add_argument("--config", help="TOML file with a [%s] table" % name)
        return sp

    s = add("simulate", "generate a synthetic catalog")
    s.add_argument("--scenario", help="'<wind>-<precip>' level pair, e.g. medium-high: " + ", ".join(scenario_names()))
    s.add_argument("--n", type=int, help="number of training events")
    s.add_argument("--n-holdout", type=int, help="held-out events written under <out>/holdout")
    s.add_argument("--truth-draws", type=int, help="truth damage draws per held-out event")
    s.add_argument("--grid", type=int, help="grid side length in cells")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=False)

    f = add("fit", "run Metropolis-Hastings on a catalog")
    f.add_argument("--catalog")
    f.add_argument("--model", help="multi, or <hazard>-only (e.g. wind-only)")
    f.add_argument("--chains", type=int)
    f.add_argument("--iter", type=int)
    f.add_argument("--burn-in", type=int)
    f.add_argument("--half-width", type=float)
    f.add_argument("--thin", type=int)
    f.add_argument("--workers", type=int)
    f.add_argument("--seed", type=int)
    f.add_argument("--out")

    d = add("diagnose", "summary table and Gelman-Rubin R-hat")
    d.add_argument("--posterior")
    d.add_argument("--split", action="store_const", const=True, default=None, help="use split R-hat")
    d.add_argument("--out")

    pr = add("predict", "posterior predictive damages for one event")
    pr.add_argument("--posterior")
    pr.add_argument("--catalog", help="training catalog (grid, exposure, normalization)")
    pr.add_argument("--event", help="event directory containing hazards.csv")
    pr.add_argument("--truth", type=float, help="observed damage of the event")
    pr.add_argument("--draws", type=int, help="subsample this many posterior draws")
    pr.add_argument("--seed", type=int)
    pr.add_argument("--out")

    m = add("metrics", "risk metrics for predictive samples")
    m.add_argument("--model", action="append", help="NAME=PATH to a one-column damage CSV (repeatable)")
    m.add_argument("--truth", help="CSV sample of true damages")
    m.add_argument("--truth-value", type=float, help="single observed damage")
    m.add_argument("--alpha", help="comma-separated confidence levels")
    m.add_argument("--over-weight", type=float)
    m.add_argument("--out")

    b = add("baseline", "deterministic Emanuel baseline for one event")
    b.add_argument("--catalog")
    b.add_argument("--event")
    b.add_argument("--model", help="baldwin, eberenz or custom")
    b.add_argument("--v-thresh", type=float)
    b.add_argument("--v-half", type=float)
    b.add_argument("--truth", type=float)
    b.add_argument("--out")
    return p


def _resolve(args) -> dict:
    cmd = args.command
    from_file = {}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file {path} not found")
        try:
            table = tomllib.loads(path.read_text())
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        from_file = {k.replace("-", "_"): v for k, v in table.get(cmd, {}).items()}
        unknown = set(from_file) - set(DEFAULTS[cmd])
        if unknown:
            raise ConfigError(f"{path}: unknown [{cmd}] keys {sorted(unknown)}")
    resolved = {}
    for key, default in DEFAULTS[cmd].items():
        value = getattr(args, key, None)
        if value is None:
            value = from_file.get(key, default)
        if value is None and key not in OPTIONAL and not (key == "out" and cmd in OPTIONAL_OUT):
            raise ConfigError(f"{cmd}: missing required option --{key.replace('_', '-')}")
        resolved[key] = value
    return resolved


def _snapshot(out: Path, cmd: str, cfg: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    io.write_json(out / "resolved_config.json", {"command": cmd, **cfg})


def cmd_simulate(cfg: dict) -> int:
    try:
        config = scenario(cfg["scenario"], n_events=cfg["n"], n_rows=cfg["grid"], n_cols=cfg["grid"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = Path(cfg["out"])
    catalog = generate_synthetic_catalog(config, cfg["seed"])
    io.write_catalog(catalog, out)
    if cfg["n_holdout"] > 0:
        if len(catalog) == 0:
            raise ConfigError("held-out events need a non-empty training catalog for normalization")
        holdout = generate_holdout_events(config, catalog, cfg["seed"], cfg["n_holdout"])
        io.write_catalog(holdout, out / "holdout")
        (out / "holdout" / "truth").mkdir(exist_ok=True)
        for e in holdout.events:
            draws = truth_damage_sample(
                catalog.exposure, e.hazards, config.vulnerability, config.error_variance,
                (cfg["seed"], "truth", e.event_id),
                cfg["truth_draws"],
            )
            io.write_sample_csv(out / "holdout" / "truth" / f"{e.event_id}.csv", draws)
    _snapshot(out, "simulate", cfg)
    print(f"wrote {len(catalog)} events to {out}")
    return 0


def cmd_fit(cfg: dict) -> int:
    catalog = io.read_catalog(cfg["catalog"])
    try:
        family = ModelFamily.from_name(cfg["model"], catalog.hazard_names)
        mcmc = McmcConfig(
            n_chains=cfg["chains"], n_iter=cfg["iter"], burn_in=cfg["burn_in"],
            proposal_half_width=cfg["half_width"], seed=cfg["seed"], thin=cfg["thin"], workers=cfg["workers"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if len(catalog) == 0:
        raise io.DataError(f"catalog {cfg['catalog']} has no events to fit")
    priors = default_priors(family.hazards)
    samples = run_mcmc(catalog, family, priors, mcmc)
    out = Path(cfg["out"])
    report = summarize(samples)
    io.write_posterior(samples, out, {
        "config": mcmc.to_dict(),
        "priors": {k: v.to_dict() for k, v in priors.items()},
        "diagnostics": report.to_dict(),
    })
    _snapshot(out, "fit", cfg)
    truth = (catalog.truth or {}).get("params")
    if truth and not set(samples.param_names) <= set(truth):
        truth = None
    print(report.table(truth))
    print("acceptance rates: " + ", ".join(f"{a:.3f}" for a in samples.acceptance_rates))
    return 0


def cmd_diagnose(cfg: dict) -> int:
    samples, meta = io.read_posterior(cfg["posterior"])
    if samples.n_chains < 2:
        raise io.DataError("R-hat needs at least 2 chains; refit with --chains 2 or more")
    try:
        gelman_rubin(samples, bool(cfg["split"]))
    except ValueError as exc:
        raise io.DataError(str(exc)) from None
    report = summarize(samples, split_rhat=bool(cfg["split"]))
    warn = not report.converged(RHAT_WARN)
    out = Path(cfg["out"] or cfg["posterior"])
    out.mkdir(parents=True, exist_ok=True)
    io.write_json(out / "diagnostics.json", {
        "rhat_warning": warn,
        "rhat_limit": RHAT_WARN,
        "split_rhat": bool(cfg["split"]),
        "params": report.to_dict(),
    })
    print(report.table())
    if warn:
        print(f"WARNING: R-hat above {RHAT_WARN} ({report.max_rhat:.4f}); chains have not converged")
    return 0


def cmd_predict(cfg: dict) -> int:
    samples, _ = io.read_posterior(cfg["posterior"])
    catalog = io.read_catalog(cfg["catalog"])
    fields = io.read_event(cfg["event"], cfg["catalog"])
    event_id = Path(cfg["event"]).name
    try:
        sample = posterior_predict(samples, catalog.exposure, fields, cfg["seed"], event_id, cfg["draws"])
    except ValueError as exc:
        raise io.DataError(str(exc)) from None
    out = Path(cfg["out"])
    io.write_predictive(sample, out, cfg["truth"])
    _snapshot(out, "predict", cfg)
    s = sample.summary(cfg["truth"])
    line = f"{event_id}: median {s['median']:.6g}, 90% interval [{s['interval_90'][0]:.6g}, {s['interval_90'][1]:.6g}]"
    if cfg["truth"] is not None:
        line += f", truth percentile {s['percentile_of_truth']:.3f}"
    print(line)
    return 0


def cmd_metrics(cfg: dict) -> int:
    specs = cfg["model"]
    if isinstance(specs, str):
        specs = [specs]
    models = {}
    for spec in specs:
        name, sep, path = spec.partition("=")
        if not sep or not name or not path:
            raise ConfigError(f"--model expects NAME=PATH, got {spec!r}")
        if name in models:
            raise ConfigError(f"duplicate model name {name!r}")
        models[name] = io.read_sample_csv(path)
    try:
        alphas = [float(a) for a in str(cfg["alpha"]).split(",")] if not isinstance(cfg["alpha"], list) else cfg["alpha"]
    except ValueError:
        raise ConfigError(f"bad alpha list {cfg['alpha']!r}") from None
    if cfg["truth"] is not None and cfg["truth_value"] is not None:
        raise ConfigError("give either --truth or --truth-value, not both")
    truth = io.read_sample_csv(cfg["truth"]) if cfg["truth"] is not None else cfg["truth_value"]
    try:
        report = build_risk_report(models, truth, alphas, over_weight=cfg["over_weight"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = Path(cfg["out"])
    io.write_risk_report(report, out)
    _snapshot(out, "metrics", cfg)
    for name, m in report.models.items():
        parts = [f"VaR{a:g}={m.var[a]:.6g}" for a in report.alphas]
        if m.wasserstein is not None:
            parts.append(f"W1={m.wasserstein:.6g}")
        print(f"{name}: " + " ".join(parts))
    return 0


def cmd_baseline(cfg: dict) -> int:
    name = cfg["model"]
    if name == "custom":
        if cfg["v_thresh"] is None or cfg["v_half"] is None:
            raise ConfigError("custom baseline needs --v-thresh and --v-half")
        try:
            baseline = DeterministicBaseline(EmanuelParams(cfg["v_thresh"], cfg["v_half"]), "custom")
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    elif name in BASELINES:
        baseline = BASELINES[name]
    else:
        raise ConfigError(f"unknown baseline {name!r}; choose baldwin, eberenz or custom")
    catalog = io.read_catalog(cfg["catalog"])
    if catalog.normalization is None:
        raise io.DataError("catalog has no normalization constants; cannot recover physical wind speeds")
    fields = io.read_event(cfg["event"], cfg["catalog"])
    try:
        value = baseline_predict(baseline, catalog.exposure, fields)
    except ValueError as exc:
        raise io.DataError(str(exc)) from None
    result = {
        "event_id": Path(cfg["event"]).name,
        "baseline": baseline.label,
        "v_thresh": baseline.params.v_thresh,
        "v_half": baseline.params.v_half,
        "damage": value,
    }
    if cfg["truth"] is not None:
        result["true_damage"] = cfg["truth"]
    if cfg["out"]:
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        io.write_json(out / f"baseline_{baseline.label}_{result['event_id']}.json", result)
        _snapshot(out, "baseline", cfg)
    print(json.dumps(result))
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "diagnose": cmd_diagnose,
    "predict": cmd_predict,
    "metrics": cmd_metrics,
    "baseline": cmd_baseline,
}


def _fail(code: int, kind: str, exc: Exception) -> int:
    print(json.dumps({"error": kind, "message": str(exc), "exit_code": code}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = _resolve(args)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        return _fail(2, "config", exc)
    except io.DataError as exc:
        return _fail(3, "data", exc)
    except (FactorizationError, DegenerateMeanError, FloatingPointError) as exc:
        return _fail(4, "numerical", exc)
    except RuntimeError as exc:
        return _fail(4, "numerical", exc)


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
