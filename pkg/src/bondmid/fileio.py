"""File formats: configs, model/prior documents, event streams, tables.

All documents carry an explicit ``schema`` tag and reject unknown keys so
typos in scientific configs fail loudly. Output files are written
atomically (temp file in the same directory, then rename). Values are
stored in bp and days; unit conversion happens only when tables are
emitted.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .errors import InputFileError
from .filtering import FilterDiagnostics, TrajectorySample
from .model import (
    DEFAULT_LEVELS,
    BondUniverse,
    EventKind,
    ModelParams,
    ObservationEvent,
    PosteriorSummary,
    Prior,
    SpreadMode,
)
from .simulator import KIND_ORDER, MarketTruth, SimConfig

MODEL_SCHEMA = "bondmid-model/1"
PRIOR_SCHEMA = "bondmid-prior/1"
SIM_SCHEMA = "bondmid-sim/1"
RUN_SCHEMA = "bondmid-run/1"
ESTIMATE_SCHEMA = "bondmid-estimate/1"

OUT_DIR_ENV = "BONDMID_OUT"


def atomic_write_text(path: str, text: str) -> None:
    """Write via a temp file in the target directory and rename over."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load_json(path: str) -> dict:
    try:
        with open(path) as f:
            return json.load(f)
    except FileNotFoundError:
        raise InputFileError(f"{path}: file not found")
    except json.JSONDecodeError as e:
        raise InputFileError(f"{path}:{e.lineno}: invalid JSON ({e.msg})")


def _check_keys(doc: dict, schema: str, required: set, optional: set, path: str) -> None:
    if not isinstance(doc, dict):
        raise InputFileError(f"{path}: expected a JSON object")
    if doc.get("schema") != schema:
        raise InputFileError(
            f"{path}: expected schema {schema!r}, got {doc.get('schema')!r}"
        )
    keys = set(doc) - {"schema"}
    unknown = keys - required - optional
    if unknown:
        raise InputFileError(f"{path}: unknown keys {sorted(unknown)}")
    missing = required - keys
    if missing:
        raise InputFileError(f"{path}: missing required keys {sorted(missing)}")


# -- model and prior documents ----------------------------------------------

def model_to_dict(universe: BondUniverse, params: ModelParams) -> dict:
    doc = {
        "schema": MODEL_SCHEMA,
        "labels": list(universe.labels),
        "sigma": params.sigma.tolist(),
        "rho": params.rho.tolist(),
        "psi_scale": params.psi_scale.tolist(),
        "sigma_eps": params.sigma_eps.tolist(),
        "spread_mode": SpreadMode(params.spread_mode).value,
    }
    if SpreadMode(params.spread_mode) is SpreadMode.OU:
        doc["a"] = params.a.tolist()
        doc["vvt"] = params.vvt.tolist()
    else:
        doc["x_mean"] = params.x_mean.tolist()
        doc["x_var"] = params.x_var.tolist()
    return doc


def model_from_dict(doc: dict, path: str = "<model>") -> tuple[BondUniverse, ModelParams]:
    _check_keys(
        doc, MODEL_SCHEMA,
        required={"labels", "sigma", "rho", "psi_scale", "sigma_eps", "spread_mode"},
        optional={"a", "vvt", "x_mean", "x_var"}, path=path,
    )
    try:
        universe = BondUniverse(doc["labels"])
        mode = SpreadMode(doc["spread_mode"])
        params = ModelParams(
            sigma=np.asarray(doc["sigma"], dtype=float),
            rho=np.asarray(doc["rho"], dtype=float),
            psi_scale=np.asarray(doc["psi_scale"], dtype=float),
            sigma_eps=np.asarray(doc["sigma_eps"], dtype=float),
            spread_mode=mode,
            a=np.asarray(doc["a"], dtype=float) if "a" in doc else None,
            vvt=np.asarray(doc["vvt"], dtype=float) if "vvt" in doc else None,
            x_mean=np.asarray(doc["x_mean"], dtype=float) if "x_mean" in doc else None,
            x_var=np.asarray(doc["x_var"], dtype=float) if "x_var" in doc else None,
        )
    except (ValueError, TypeError) as e:
        raise InputFileError(f"{path}: {e}")
    return universe, params


def save_model(path: str, universe: BondUniverse, params: ModelParams) -> None:
    atomic_write_text(path, json.dumps(model_to_dict(universe, params), indent=1) + "\n")


def load_model(path: str) -> tuple[BondUniverse, ModelParams]:
    return model_from_dict(_load_json(path), path)


def prior_to_dict(prior: Prior) -> dict:
    return {
        "schema": PRIOR_SCHEMA,
        "mean_y": prior.mean_y.tolist(),
        "cov_y": prior.cov_y.tolist(),
        "mean_x": prior.mean_x.tolist(),
        "cov_x": prior.cov_x.tolist(),
    }


def prior_from_dict(doc: dict, path: str = "<prior>") -> Prior:
    _check_keys(doc, PRIOR_SCHEMA,
                required={"mean_y", "cov_y", "mean_x", "cov_x"}, optional=set(),
                path=path)
    try:
        return Prior(doc["mean_y"], doc["cov_y"], doc["mean_x"], doc["cov_x"])
    except (ValueError, TypeError) as e:
        raise InputFileError(f"{path}: {e}")


def save_prior(path: str, prior: Prior) -> None:
    atomic_write_text(path, json.dumps(prior_to_dict(prior), indent=1) + "\n")


def load_prior(path: str) -> Prior:
    return prior_from_dict(_load_json(path), path)


# -- event streams (one JSON object per line) --------------------------------

_EVENT_KEYS = {"t", "bond", "kind", "Y", "Z", "alpha"}


def event_to_dict(ev: ObservationEvent, labels) -> dict:
    doc = {"t": ev.time, "bond": labels[ev.bond], "kind": ev.kind.value}
    if ev.kind in (EventKind.CLIENT_BUY, EventKind.CLIENT_SELL):
        doc["Y"] = ev.ytb
    elif ev.kind in (EventKind.AWAY_BUY, EventKind.AWAY_SELL):
        doc["Z"] = ev.quote
    else:
        doc["Y"] = ev.ytb
        doc["alpha"] = ev.alpha
    return doc


def save_events(path: str, events, universe: BondUniverse) -> None:
    buf = io.StringIO()
    for ev in events:
        buf.write(json.dumps(event_to_dict(ev, universe.labels)))
        buf.write("\n")
    atomic_write_text(path, buf.getvalue())


def _event_from_dict(doc: dict, universe: BondUniverse, where: str) -> ObservationEvent:
    unknown = set(doc) - _EVENT_KEYS
    if unknown:
        raise InputFileError(f"{where}: unknown keys {sorted(unknown)}")
    for key in ("t", "bond", "kind"):
        if key not in doc:
            raise InputFileError(f"{where}: missing key {key!r}")
    bond = doc["bond"]
    if isinstance(bond, str):
        try:
            bond = universe.index(bond)
        except ValueError:
            raise InputFileError(f"{where}: unknown bond label {bond!r}")
    try:
        kind = EventKind(doc["kind"])
    except ValueError:
        raise InputFileError(f"{where}: unknown kind {doc['kind']!r}")
    payload = "Z" if kind in (EventKind.AWAY_BUY, EventKind.AWAY_SELL) else "Y"
    if payload not in doc:
        raise InputFileError(f"{where}: kind {kind.value!r} requires key {payload!r}")
    try:
        if kind in (EventKind.AWAY_BUY, EventKind.AWAY_SELL):
            return ObservationEvent(float(doc["t"]), int(bond), kind,
                                    quote=float(doc["Z"]))
        if kind is EventKind.INTER_DEALER:
            if "alpha" not in doc:
                raise InputFileError(f"{where}: d2d events require key 'alpha'")
            return ObservationEvent(float(doc["t"]), int(bond), kind,
                                    ytb=float(doc["Y"]), alpha=float(doc["alpha"]))
        return ObservationEvent(float(doc["t"]), int(bond), kind, ytb=float(doc["Y"]))
    except (ValueError, TypeError) as e:
        if isinstance(e, InputFileError):
            raise
        raise InputFileError(f"{where}: {e}")


def load_events(path: str, universe: BondUniverse) -> list[ObservationEvent]:
    events = []
    try:
        with open(path) as f:
            lines = f.readlines()
    except FileNotFoundError:
        raise InputFileError(f"{path}: file not found")
    for n, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as e:
            raise InputFileError(f"{path}:{n}: invalid JSON ({e.msg})")
        events.append(_event_from_dict(doc, universe, f"{path}:{n}"))
    return events


# -- composite and trade CSV files -------------------------------------------

def save_composite_csv(path: str, labels, times, mid, spread=None) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["bond", "t", "mid", "spread"])
    for b, label in enumerate(labels):
        s = None if spread is None else spread[b]
        for k in range(len(times[b])):
            sv = "" if s is None or not np.isfinite(s[k]) else repr(float(s[k]))
            w.writerow([label, repr(float(times[b][k])), repr(float(mid[b][k])), sv])
    atomic_write_text(path, buf.getvalue())


def load_composite_csv(path: str):
    """Returns (labels, times, mid, spread) lists grouped by bond, in first-
    appearance order. The spread column may be absent or partially empty."""
    try:
        f = open(path, newline="")
    except FileNotFoundError:
        raise InputFileError(f"{path}: file not found")
    with f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise InputFileError(f"{path}: empty file")
        if header[:3] != ["bond", "t", "mid"] or header not in (
            ["bond", "t", "mid"], ["bond", "t", "mid", "spread"]
        ):
            raise InputFileError(
                f"{path}: expected header bond,t,mid[,spread], got {','.join(header)}"
            )
        has_spread = len(header) == 4
        data: dict[str, list] = {}
        for n, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise InputFileError(f"{path}:{n}: expected {len(header)} fields")
            label = row[0]
            try:
                t, m = float(row[1]), float(row[2])
                s = float(row[3]) if has_spread and row[3] != "" else np.nan
            except ValueError as e:
                raise InputFileError(f"{path}:{n}: {e}")
            data.setdefault(label, []).append((t, m, s))
    labels = list(data)
    times = [np.array([r[0] for r in data[l]]) for l in labels]
    mid = [np.array([r[1] for r in data[l]]) for l in labels]
    if has_spread:
        spread = [np.array([r[2] for r in data[l]]) for l in labels]
        spread = [s if np.any(np.isfinite(s)) else None for s in spread]
    else:
        spread = [None] * len(labels)
    return labels, times, mid, spread


def save_trades_csv(path: str, labels, times, ytb) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["bond", "t", "ytb"])
    for b, label in enumerate(labels):
        for k in range(len(times[b])):
            w.writerow([label, repr(float(times[b][k])), repr(float(ytb[b][k]))])
    atomic_write_text(path, buf.getvalue())


def load_trades_csv(path: str):
    """Returns {label: (times, ytb)} with times sorted per bond."""
    try:
        f = open(path, newline="")
    except FileNotFoundError:
        raise InputFileError(f"{path}: file not found")
    with f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != ["bond", "t", "ytb"]:
            raise InputFileError(f"{path}: expected header bond,t,ytb")
        data: dict[str, list] = {}
        for n, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise InputFileError(f"{path}:{n}: expected 3 fields")
            try:
                data.setdefault(row[0], []).append((float(row[1]), float(row[2])))
            except ValueError as e:
                raise InputFileError(f"{path}:{n}: {e}")
    out = {}
    for label, rows in data.items():
        rows.sort()
        out[label] = (np.array([r[0] for r in rows]), np.array([r[1] for r in rows]))
    return out


# -- tables -------------------------------------------------------------------

def _fmt(v: float) -> str:
    return f"{v:.6g}"


def level_tag(p: float) -> str:
    return f"q{p * 100:g}"


def summary_header(levels) -> list[str]:
    cols = ["t", "bond"]
    for prefix in ("y", "psi"):
        cols += [f"{prefix}_mean", f"{prefix}_std"]
        cols += [f"{prefix}_{level_tag(p)}" for p in levels]
    return cols


def summary_rows(summary: PosteriorSummary, labels, unit: str = "bp"):
    scale = 0.01 if unit == "pct" else 1.0
    for b, label in enumerate(labels):
        row = [f"{summary.time:.10g}", label]
        row += [_fmt(summary.mean_y[b] * scale), _fmt(summary.std_y[b] * scale)]
        row += [_fmt(q * scale) for q in summary.q_y[b]]
        row += [_fmt(summary.mean_psi[b] * scale), _fmt(summary.std_psi[b] * scale)]
        row += [_fmt(q * scale) for q in summary.q_psi[b]]
        yield row


def write_summary_table(path: str, summaries, labels, levels, unit: str = "bp") -> None:
    buf = io.StringIO()
    buf.write("\t".join(summary_header(levels)) + "\n")
    for s in summaries:
        for row in summary_rows(s, labels, unit):
            buf.write("\t".join(row) + "\n")
    atomic_write_text(path, buf.getvalue())


def write_diagnostics_table(path: str, diags, labels) -> None:
    buf = io.StringIO()
    cols = ["t", "bond", "kind", "ess", "log_w_min", "log_w_max",
            "n_zero_weight", "resample_entropy", "n_unique_ancestors"]
    buf.write("\t".join(cols) + "\n")
    for dg in diags:
        buf.write("\t".join([
            f"{dg.time:.10g}", labels[dg.bond], dg.kind.value, _fmt(dg.ess),
            _fmt(dg.log_w_min), _fmt(dg.log_w_max), str(dg.n_zero_weight),
            _fmt(dg.resample_entropy), str(dg.n_unique_ancestors),
        ]) + "\n")
    atomic_write_text(path, buf.getvalue())


def write_trajectories_table(path: str, sample: TrajectorySample, labels,
                             n_paths: int, unit: str = "bp") -> None:
    scale = 0.01 if unit == "pct" else 1.0
    buf = io.StringIO()
    buf.write("path\tt\tbond\ty\tpsi\n")
    for k in range(min(n_paths, sample.y.shape[0])):
        for m, t in enumerate(sample.times):
            for b, label in enumerate(labels):
                buf.write("\t".join([
                    str(k), f"{t:.10g}", label,
                    _fmt(sample.y[k, m, b] * scale),
                    _fmt(sample.psi[k, m, b] * scale),
                ]) + "\n")
    atomic_write_text(path, buf.getvalue())


def write_truth_table(path: str, truth: MarketTruth, labels) -> None:
    buf = io.StringIO()
    buf.write("t\tbond\ty\tx\tpsi\n")
    psi = truth.psi()
    for m, t in enumerate(truth.times):
        for b, label in enumerate(labels):
            buf.write("\t".join([
                f"{t:.10g}", label, _fmt(truth.y[m, b]), _fmt(truth.x[m, b]),
                _fmt(psi[m, b]),
            ]) + "\n")
    atomic_write_text(path, buf.getvalue())


def read_summary_table(path: str):
    """Parse a summary table back into (header, rows-of-strings)."""
    try:
        with open(path) as f:
            lines = [ln.rstrip("\n") for ln in f]
    except FileNotFoundError:
        raise InputFileError(f"{path}: file not found")
    if not lines:
        raise InputFileError(f"{path}: empty file")
    header = lines[0].split("\t")
    if header[:2] != ["t", "bond"]:
        raise InputFileError(f"{path}: not a summary table (header {header[:2]})")
    rows = [ln.split("\t") for ln in lines[1:] if ln]
    for n, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise InputFileError(f"{path}:{n}: expected {len(header)} fields")
    return header, rows


def write_report_table(path: str, header, rows, unit: str = "bp", levels=None) -> None:
    """Reshape a summary table into long format (t, bond, series, stat, value).

    Input values are in bp; ``unit='pct'`` divides by 100 on output.
    ``levels`` optionally restricts which quantile columns are kept.
    """
    scale = 0.01 if unit == "pct" else 1.0
    keep_tags = None if levels is None else {level_tag(p) for p in levels}
    buf = io.StringIO()
    buf.write("t\tbond\tseries\tstat\tvalue\n")
    for row in rows:
        for c, col in enumerate(header):
            if c < 2:
                continue
            series, stat = col.split("_", 1)
            if stat.startswith("q") and keep_tags is not None and stat not in keep_tags:
                continue
            try:
                v = float(row[c])
            except ValueError:
                raise InputFileError(f"non-numeric value {row[c]!r} in column {col}")
            buf.write("\t".join([row[0], row[1], series, stat, _fmt(v * scale)]) + "\n")
    atomic_write_text(path, buf.getvalue())


# -- run / sim / estimate configs ---------------------------------------------

@dataclass
class RunConfig:
    """Filtering run description (paths resolved relative to the cwd)."""

    model: str
    prior: str
    events: str
    particles: int = 10_000
    seed: int = 0
    levels: tuple = DEFAULT_LEVELS
    out_dir: str | None = None
    cadence: str | float = "per_event"
    unit: str = "bp"
    workers: int = 1
    resampling: str = "multinomial"
    trajectories: int = 0


def load_run_config(path: str) -> RunConfig:
    doc = _load_json(path)
    _check_keys(
        doc, RUN_SCHEMA, required={"model", "prior", "events"},
        optional={"particles", "seed", "levels", "out_dir", "cadence", "unit",
                  "workers", "resampling", "trajectories"},
        path=path,
    )
    cfg = RunConfig(model=doc["model"], prior=doc["prior"], events=doc["events"])
    for key in ("particles", "seed", "out_dir", "cadence", "unit", "workers",
                "resampling", "trajectories"):
        if key in doc:
            setattr(cfg, key, doc[key])
    if "levels" in doc:
        cfg.levels = tuple(float(p) for p in doc["levels"])
    if cfg.unit not in ("bp", "pct"):
        raise InputFileError(f"{path}: unit must be 'bp' or 'pct', got {cfg.unit!r}")
    if cfg.cadence != "per_event":
        try:
            cfg.cadence = float(cfg.cadence)
        except (TypeError, ValueError):
            raise InputFileError(
                f"{path}: cadence must be 'per_event' or a grid step in days"
            )
        if not cfg.cadence > 0.0:
            raise InputFileError(f"{path}: cadence grid step must be > 0")
    if int(cfg.particles) < 2:
        raise InputFileError(f"{path}: particles must be >= 2")
    if not all(0.0 < p < 1.0 for p in cfg.levels) or \
            list(cfg.levels) != sorted(set(cfg.levels)):
        raise InputFileError(f"{path}: levels must be strictly increasing in (0, 1)")
    return cfg


_MIX_KEYS = tuple(k.value for k in KIND_ORDER)


def load_sim_config(path: str):
    """Returns (universe, params, prior, SimConfig). The model and prior may
    be given inline as objects or as paths to their own documents."""
    doc = _load_json(path)
    _check_keys(
        doc, SIM_SCHEMA, required={"model", "prior", "horizon_days", "intensity"},
        optional={"mix", "away_offset_scale", "alpha", "seed",
                  "path_grid_step_days", "composite_spread_factor"},
        path=path,
    )
    model_doc = doc["model"]
    if isinstance(model_doc, str):
        universe, params = load_model(model_doc)
    else:
        universe, params = model_from_dict(model_doc, f"{path}#model")
    prior_doc = doc["prior"]
    if isinstance(prior_doc, str):
        prior = load_prior(prior_doc)
    else:
        prior = prior_from_dict(prior_doc, f"{path}#prior")

    mix = doc.get("mix")
    if mix is None:
        mix_tuple = SimConfig.__dataclass_fields__["mix"].default
    else:
        unknown = set(mix) - set(_MIX_KEYS)
        if unknown:
            raise InputFileError(f"{path}: unknown mix keys {sorted(unknown)}")
        mix_tuple = tuple(float(mix.get(k, 0.0)) for k in _MIX_KEYS)
        if not np.isclose(sum(mix_tuple), 1.0):
            raise InputFileError(
                f"{path}: field 'mix' must sum to 1, got {sum(mix_tuple):g}"
            )
    cfg = SimConfig(
        horizon=float(doc["horizon_days"]),
        intensity=float(doc["intensity"]),
        mix=mix_tuple,
        away_offset_scale=float(doc.get("away_offset_scale", 0.5)),
        alpha=doc.get("alpha", 1.0),
        seed=int(doc.get("seed", 0)),
        path_grid_step=(float(doc["path_grid_step_days"])
                        if doc.get("path_grid_step_days") is not None else None),
        composite_spread_factor=float(doc.get("composite_spread_factor", 6.0)),
    )
    return universe, params, prior, cfg


@dataclass
class EstimateConfig:
    composite: str
    trades: str | None = None
    sampling_interval_days: float = 1.0
    spread_shrink: float = 1.0 / 3.0
    spread_source: str = "composite"
    sigma_eps_fraction: float = 0.05


def load_estimate_config(path: str) -> EstimateConfig:
    doc = _load_json(path)
    _check_keys(
        doc, ESTIMATE_SCHEMA, required={"composite"},
        optional={"trades", "sampling_interval_days", "spread_shrink",
                  "spread_source", "sigma_eps_fraction"},
        path=path,
    )
    cfg = EstimateConfig(composite=doc["composite"])
    for key in ("trades", "sampling_interval_days", "spread_shrink",
                "spread_source", "sigma_eps_fraction"):
        if key in doc:
            setattr(cfg, key, doc[key])
    if cfg.spread_source not in ("composite", "trades"):
        raise InputFileError(
            f"{path}: spread_source must be 'composite' or 'trades', "
            f"got {cfg.spread_source!r}"
        )
    if cfg.spread_source == "trades" and cfg.trades is None:
        raise InputFileError(f"{path}: spread_source 'trades' needs a trades file")
    return cfg
