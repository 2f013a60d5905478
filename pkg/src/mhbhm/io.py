"""Plain-text file formats for every artifact the pipeline reads or writes.

Floats are written with ``repr`` (shortest round-trip decimal), so reading a
file back gives bit-identical values and rewriting it gives identical bytes.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .damage import EventCatalog, EventRecord
from .grids import ExposureField, HazardFieldSet, SpatialGrid
from .inference import PosteriorSamples
from .predict import PredictiveSample
from .risk import RiskReport


class DataError(ValueError):
    """An input file is missing, malformed or inconsistent."""


def _fmt(x) -> str:
    return repr(float(x))


def _float(text: str, path, line: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"{path}:{line}: cannot parse number {text!r}") from None
    if not math.isfinite(value):
        raise DataError(f"{path}:{line}: non-finite value {text!r}")
    return value


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2) + "\n")


def read_json(path):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing file {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _read_csv(path, header):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing file {path}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [h.strip() for h in rows[0]] != list(header):
        raise DataError(f"{path}:1: expected header {','.join(header)}")
    out = []
    for i, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise DataError(f"{path}:{i}: expected {len(header)} fields, got {len(row)}")
        out.append((i, row))
    return out


# --- grid and fields --------------------------------------------------------


def grid_to_dict(grid: SpatialGrid, hazard_names=(), normalization=None) -> dict:
    d = {
        "n_rows": grid.n_rows,
        "n_cols": grid.n_cols,
        "cell_size": grid.cell_size,
        "origin": list(grid.origin),
        "hazards": list(hazard_names),
    }
    if normalization is not None:
        d["normalization"] = [
            {"name": n, "offset": o, "scale": s} for n, (o, s) in zip(hazard_names, normalization)
        ]
    return d


def grid_from_dict(d: dict, path="grid.json"):
    try:
        grid = SpatialGrid(d["n_rows"], d["n_cols"], d.get("cell_size", 1.0), tuple(d.get("origin", (0.0, 0.0))))
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: invalid grid description ({exc})") from None
    names = tuple(d.get("hazards", ()))
    norm = d.get("normalization")
    if norm is not None:
        by_name = {n["name"]: (float(n["offset"]), float(n["scale"])) for n in norm}
        if not names:
            names = tuple(n["name"] for n in norm)
        missing = [n for n in names if n not in by_name]
        if missing:
            raise DataError(f"{path}: no normalization constants for hazards {missing}")
        norm = tuple(by_name[n] for n in names)
    return grid, names, norm


def write_exposure_csv(path, exposure: ExposureField) -> None:
    rows, cols = exposure.grid.row_col(np.arange(exposure.grid.n_cells))
    _write_csv(path, ["row", "col", "value"], ((r, c, _fmt(v)) for r, c, v in zip(rows, cols, exposure.values)))


def read_exposure_csv(path, grid: SpatialGrid) -> ExposureField:
    values = np.full(grid.n_cells, np.nan)
    for line, (r, c, v) in _read_csv(path, ["row", "col", "value"]):
        try:
            i = grid.index(int(r), int(c))
        except (ValueError, IndexError):
            raise DataError(f"{path}:{line}: bad cell ({r}, {c})") from None
        values[i] = _float(v, path, line)
    if np.isnan(values).any():
        raise DataError(f"{path}: {int(np.isnan(values).sum())} grid cells have no exposure value")
    try:
        return ExposureField(grid, values)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


def write_hazards_csv(path, fields: HazardFieldSet) -> None:
    rows, cols = fields.grid.row_col(np.arange(fields.grid.n_cells))

    def gen():
        for i in range(fields.grid.n_cells):
            for j, name in enumerate(fields.names):
                yield rows[i], cols[i], name, _fmt(fields.values[j, i])

    _write_csv(path, ["row", "col", "hazard", "value"], gen())


def read_hazards_csv(path, grid: SpatialGrid, names, normalization=None) -> HazardFieldSet:
    names = tuple(names)
    values = np.full((len(names), grid.n_cells), np.nan)
    for line, (r, c, h, v) in _read_csv(path, ["row", "col", "hazard", "value"]):
        if h not in names:
            raise DataError(f"{path}:{line}: unknown hazard {h!r} (expected one of {list(names)})")
        try:
            i = grid.index(int(r), int(c))
        except (ValueError, IndexError):
            raise DataError(f"{path}:{line}: bad cell ({r}, {c})") from None
        values[names.index(h), i] = _float(v, path, line)
    if np.isnan(values).any():
        raise DataError(f"{path}: missing values for some (cell, hazard) pairs")
    return HazardFieldSet(grid, names, values, normalization)


# --- catalogs ---------------------------------------------------------------


def write_catalog(catalog: EventCatalog, directory) -> Path:
    """Write ``grid.json``, ``exposure.csv``, ``events/<id>/hazards.csv``,
    ``catalog.csv`` and, for synthetic catalogs, ``truth.json``."""
    root = Path(directory)
    (root / "events").mkdir(parents=True, exist_ok=True)
    write_json(root / "grid.json", grid_to_dict(catalog.grid, catalog.hazard_names, catalog.normalization))
    write_exposure_csv(root / "exposure.csv", catalog.exposure)
    for e in catalog.events:
        (root / "events" / e.event_id).mkdir(exist_ok=True)
        write_hazards_csv(root / "events" / e.event_id / "hazards.csv", e.hazards)
    _write_csv(
        root / "catalog.csv",
        ["event_id", "observed_damage"],
        ((e.event_id, "" if e.observed_damage is None else _fmt(e.observed_damage)) for e in catalog.events),
    )
    if catalog.truth is not None:
        write_json(root / "truth.json", catalog.truth)
    return root


def read_catalog(directory) -> EventCatalog:
    root = Path(directory)
    if not root.is_dir():
        raise DataError(f"catalog directory {root} does not exist")
    grid, names, norm = grid_from_dict(read_json(root / "grid.json"), root / "grid.json")
    exposure = read_exposure_csv(root / "exposure.csv", grid)
    events = []
    for line, (event_id, damage) in _read_csv(root / "catalog.csv", ["event_id", "observed_damage"]):
        d = _float(damage, root / "catalog.csv", line) if damage.strip() else None
        hz = read_hazards_csv(root / "events" / event_id / "hazards.csv", grid, names, norm)
        try:
            events.append(EventRecord(event_id, hz, d))
        except ValueError as exc:
            raise DataError(f"{root / 'catalog.csv'}:{line}: {exc}") from None
    truth = read_json(root / "truth.json") if (root / "truth.json").is_file() else None
    try:
        return EventCatalog(grid, exposure, tuple(events), names, norm, truth)
    except ValueError as exc:
        raise DataError(f"{root}: {exc}") from None


def read_event(event_dir, catalog_dir) -> HazardFieldSet:
    """Hazards of a single event directory, using the catalog's grid and constants."""
    root = Path(catalog_dir)
    grid, names, norm = grid_from_dict(read_json(root / "grid.json"), root / "grid.json")
    return read_hazards_csv(Path(event_dir) / "hazards.csv", grid, names, norm)


# --- posteriors -------------------------------------------------------------


def write_posterior(samples: PosteriorSamples, directory, extra: dict | None = None) -> Path:
    root = Path(directory)
    (root / "chains").mkdir(parents=True, exist_ok=True)
    for k, chain in enumerate(samples.chains):
        _write_csv(
            root / "chains" / f"{k}.csv",
            ["iter", *samples.param_names],
            ([t, *map(_fmt, row)] for t, row in enumerate(chain)),
        )
    meta = {
        "param_names": list(samples.param_names),
        "n_chains": samples.n_chains,
        "n_iter": int(len(samples.chains[0])),
        "burn_in": samples.burn_in,
        "thin": samples.thin,
        "acceptance_rates": samples.acceptance_rates,
        "provenance": samples.provenance,
    }
    meta.update(extra or {})
    write_json(root / "posterior.json", meta)
    return root


def read_posterior(directory) -> tuple[PosteriorSamples, dict]:
    root = Path(directory)
    meta = read_json(root / "posterior.json")
    names = tuple(meta["param_names"])
    chains = []
    for k in range(int(meta["n_chains"])):
        path = root / "chains" / f"{k}.csv"
        rows = _read_csv(path, ["iter", *names])
        arr = np.empty((len(rows), len(names)))
        for t, (line, row) in enumerate(rows):
            if row[0].strip() != str(t):
                raise DataError(f"{path}:{line}: expected iteration {t}, got {row[0]!r}")
            arr[t] = [_float(v, path, line) for v in row[1:]]
        chains.append(arr)
    samples = PosteriorSamples(
        names, chains, int(meta["burn_in"]), list(meta["acceptance_rates"]),
        meta.get("provenance", {}), int(meta.get("thin", 1)),
    )
    return samples, meta


# --- predictive samples and reports -----------------------------------------


def write_sample_csv(path, damages) -> None:
    _write_csv(path, ["damage"], ([_fmt(v)] for v in damages))


def read_sample_csv(path) -> np.ndarray:
    rows = _read_csv(path, ["damage"])
    if not rows:
        raise DataError(f"{path}: sample file has no values")
    return np.array([_float(r[0], path, line) for line, r in rows])


def write_predictive(sample: PredictiveSample, directory, true_damage=None) -> Path:
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    path = root / f"predictive_{sample.event_id}.csv"
    write_sample_csv(path, sample.damages)
    summary = sample.summary(true_damage)
    summary["provenance"] = sample.provenance
    write_json(root / f"predictive_{sample.event_id}.json", summary)
    return path


def write_risk_report(report: RiskReport, directory) -> Path:
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    write_json(root / "risk_report.json", report.to_dict())
    _write_csv(
        root / "exceedance.csv",
        ["model", "threshold", "prob"],
        ((m, _fmt(t), _fmt(p)) for m, t, p in report.exceedance_rows()),
    )
    return root
