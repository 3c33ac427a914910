"""Command-line front end: simulate, filter, estimate, report."""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import fileio
from .errors import AllWeightsZero, BondmidError
from .estimation import (
    CompositeSeries,
    derive_sigma_eps,
    estimate_sigma_rho,
    fit_spread_lognormal,
    proxies_from_trades,
)
from .filtering import ParticleFilter, posterior, trajectories
from .model import (
    ModelParams,
    SpreadMode,
    check_event_stream,
    validate_params,
)
from .simulator import simulate

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_RUNTIME = 3


def _out_dir(flag: str | None, cfg_dir: str | None) -> str:
    return flag or cfg_dir or os.environ.get(fileio.OUT_DIR_ENV) or "."


def cmd_simulate(args) -> int:
    universe, params, prior, cfg = fileio.load_sim_config(args.config)
    if args.seed is not None:
        cfg = type(cfg)(**{**cfg.__dict__, "seed": args.seed})
    model = validate_params(params, universe)
    truth = simulate(model, prior, cfg)
    out = _out_dir(args.out, None)
    os.makedirs(out, exist_ok=True)
    fileio.save_model(os.path.join(out, "model.json"), universe, params)
    fileio.save_prior(os.path.join(out, "prior.json"), prior)
    fileio.save_events(os.path.join(out, "events.jsonl"), truth.events, universe)
    fileio.write_truth_table(os.path.join(out, "truth.tsv"), truth, universe.labels)
    if cfg.path_grid_step is not None:
        grid_rows = [m for m, t in enumerate(truth.times)
                     if m > 0 and m not in set(truth.event_rows)]
        times = [truth.times[grid_rows] for _ in universe.labels]
        mid = [truth.y[grid_rows, b] for b in range(universe.d)]
        psi = truth.psi()
        spread = [cfg.composite_spread_factor * psi[grid_rows, b]
                  for b in range(universe.d)]
        fileio.save_composite_csv(os.path.join(out, "composite.csv"),
                                  universe.labels, times, mid, spread)
    print(f"wrote {len(truth.events)} events for {universe.d} bonds to {out}")
    return EXIT_OK


def cmd_filter(args) -> int:
    cfg = fileio.load_run_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.particles is not None:
        cfg.particles = args.particles
    if args.levels is not None:
        cfg.levels = args.levels
    if args.workers is not None:
        cfg.workers = args.workers

    universe, params = fileio.load_model(cfg.model)
    model = validate_params(params, universe)
    prior = fileio.load_prior(cfg.prior)
    events = fileio.load_events(cfg.events, universe)
    check_event_stream(events, universe.d)

    pf = ParticleFilter(model, resampling=cfg.resampling, workers=int(cfg.workers),
                        track_history=cfg.trajectories > 0)
    cloud = pf.init(prior, int(cfg.particles), int(cfg.seed))

    summaries = [posterior(cloud, cfg.levels)]
    diags = []
    grid_next = None if cfg.cadence == "per_event" else float(cfg.cadence)
    for ev in events:
        if grid_next is not None:
            while grid_next < ev.time:
                summaries.append(pf.predict(cloud, grid_next, cfg.levels))
                grid_next += float(cfg.cadence)
        cloud, dg = pf.step(cloud, ev)
        diags.append(dg)
        if grid_next is None:
            summaries.append(posterior(cloud, cfg.levels))
    if grid_next is not None and events:
        while grid_next <= events[-1].time:
            summaries.append(pf.predict(cloud, grid_next, cfg.levels))
            grid_next += float(cfg.cadence)

    out = _out_dir(args.out, cfg.out_dir)
    os.makedirs(out, exist_ok=True)
    fileio.write_summary_table(os.path.join(out, "summary.tsv"), summaries,
                               universe.labels, cfg.levels, cfg.unit)
    fileio.write_diagnostics_table(os.path.join(out, "diagnostics.tsv"), diags,
                                   universe.labels)
    if cfg.trajectories > 0:
        fileio.write_trajectories_table(os.path.join(out, "trajectories.tsv"),
                                        trajectories(cloud), universe.labels,
                                        int(cfg.trajectories), cfg.unit)
    print(f"processed {len(events)} events, wrote tables to {out}")
    return EXIT_OK


def cmd_estimate(args) -> int:
    cfg = fileio.load_estimate_config(args.config)
    labels, times, mid, spread = fileio.load_composite_csv(cfg.composite)
    series = CompositeSeries(labels, times, mid, spread)
    sigma, rho = estimate_sigma_rho(series, float(cfg.sampling_interval_days))

    proxies = None
    if cfg.spread_source == "trades":
        trades = fileio.load_trades_csv(cfg.trades)
        t_by_bond = [trades.get(l, (np.empty(0), np.empty(0)))[0] for l in labels]
        y_by_bond = [trades.get(l, (np.empty(0), np.empty(0)))[1] for l in labels]
        proxies = proxies_from_trades(series, t_by_bond, y_by_bond)
    fit = fit_spread_lognormal(proxies=proxies, composite=series,
                               shrink=float(cfg.spread_shrink))
    sigma_eps = derive_sigma_eps(series, float(cfg.sigma_eps_fraction))

    from .model import BondUniverse

    universe = BondUniverse(labels)
    params = ModelParams(
        sigma=sigma, rho=rho, psi_scale=fit.psi_scale, sigma_eps=sigma_eps,
        spread_mode=SpreadMode.IID, x_mean=fit.x_mean, x_var=fit.x_var,
    )
    validate_params(params, universe)
    out = args.out or "model_estimated.json"
    fileio.save_model(out, universe, params)
    print(f"estimated parameters for {len(labels)} bonds -> {out}")
    return EXIT_OK


def cmd_report(args) -> int:
    header, rows = fileio.read_summary_table(args.summary)
    fileio.write_report_table(args.out, header, rows, unit=args.unit,
                              levels=args.levels)
    print(f"wrote report to {args.out}")
    return EXIT_OK


def _levels_arg(text: str):
    try:
        return tuple(float(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad levels list {text!r}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="bondmid",
        description="Mid-YtB and half-spread estimation from dealer observations",
    )
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("simulate", help="generate a synthetic market scenario")
    ps.add_argument("--config", required=True, help="scenario JSON document")
    ps.add_argument("--out", help="output directory")
    ps.add_argument("--seed", type=int, help="override the scenario seed")
    ps.set_defaults(fn=cmd_simulate)

    pf = sub.add_parser("filter", help="run the particle filter over an event file")
    pf.add_argument("--config", required=True, help="run JSON document")
    pf.add_argument("--out", help="output directory")
    pf.add_argument("--seed", type=int)
    pf.add_argument("--particles", type=int)
    pf.add_argument("--levels", type=_levels_arg,
                    help="comma-separated quantile levels in (0,1)")
    pf.add_argument("--workers", type=int)
    pf.set_defaults(fn=cmd_filter)

    pe = sub.add_parser("estimate", help="calibrate model parameters from data files")
    pe.add_argument("--config", required=True, help="estimation JSON document")
    pe.add_argument("--out", help="output model file (default model_estimated.json)")
    pe.set_defaults(fn=cmd_estimate)

    pr = sub.add_parser("report", help="reshape a summary table for plotting")
    pr.add_argument("--summary", required=True, help="summary.tsv from a filter run")
    pr.add_argument("--out", required=True, help="output table path")
    pr.add_argument("--unit", choices=("bp", "pct"), default="bp")
    pr.add_argument("--levels", type=_levels_arg,
                    help="restrict quantile columns to these levels")
    pr.set_defaults(fn=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except AllWeightsZero as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except (BondmidError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
