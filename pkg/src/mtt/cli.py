"""Command-line entry point: ``mtt sim | run | ospa | report``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from .harness import (
    FILTER_NAMES,
    ExperimentConfig,
    emit_report,
    format_summary,
    plot_curves,
    read_summary,
    run_experiment,
)
from .metrics import OspaParams, ospa
from .scenario import load_scenario, simulate

STATE_COLUMNS = ("x", "vx", "y", "vy", "w")


def _csv_list(text, cast=str):
    return [cast(v) for v in text.split(",") if v.strip()]


def cmd_sim(args) -> int:
    scen = load_scenario(args.scenario)
    if args.clutter is not None:
        scen = scen.with_clutter(args.clutter)
    truth, scans = simulate(scen, np.random.default_rng(args.seed), args.noise)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "truth.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("step", "target") + STATE_COLUMNS)
        for k in range(1, scen.duration + 1):
            for tid, x in zip(truth.ids[k - 1], truth.at(k)):
                w.writerow([k, int(tid)] + [repr(float(v)) for v in x])
    with open(out / "scans.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("step", "range", "bearing"))
        for k, Z in enumerate(scans, 1):
            for z in Z:
                w.writerow([k, repr(float(z[0])), repr(float(z[1]))])
    print(f"wrote {out / 'truth.csv'} and {out / 'scans.csv'} ({scen.duration} steps)")
    return 0


def _config_from_args(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
    if args.scenario is not None:
        cfg.scenario = args.scenario
    if args.filters is not None:
        cfg.filters = _csv_list(args.filters)
    if args.clutter is not None:
        cfg.clutter_rates = _csv_list(args.clutter, float)
    for key in ("runs", "seed", "workers", "out"):
        if getattr(args, key) is not None:
            setattr(cfg, key, getattr(args, key))
    if args.timing:
        cfg.timing = True
    cfg.__post_init__()
    return cfg


def cmd_run(args) -> int:
    cfg = _config_from_args(args)
    results = run_experiment(cfg)
    emit_report(results, cfg.out, plots=not args.no_plots)
    print(format_summary(read_summary(cfg.out)))
    excluded = sum(len(c.excluded) for c in results.cells)
    if excluded:
        print(f"{excluded} diverged run(s) excluded; see {Path(cfg.out) / 'excluded_runs.csv'}")
    return 0


def _read_sets(path):
    """{step: (n, 2) positions} from a CSV with x and y columns (step optional)."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    sets = {}
    for r in rows:
        step = int(r["step"]) if r.get("step") not in (None, "") else 0
        pts = sets.setdefault(step, [])
        if r.get("x") not in (None, ""):
            pts.append((float(r["x"]), float(r["y"])))
    return {k: np.array(v, dtype=float).reshape(-1, 2) for k, v in sets.items()}


def cmd_ospa(args) -> int:
    params = OspaParams(args.order, args.cutoff)
    truth, est = _read_sets(args.truth), _read_sets(args.est)
    steps = sorted(set(truth) | set(est))
    empty = np.zeros((0, 2))
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(("step", "ospa", "loc", "card"))
    total = []
    for k in steps:
        r = ospa(truth.get(k, empty), est.get(k, empty), params)
        total.append((r.total, r.loc, r.card))
        w.writerow([k, f"{r.total:.6f}", f"{r.loc:.6f}", f"{r.card:.6f}"])
    if len(steps) > 1:
        m = np.mean(total, axis=0)
        w.writerow(["mean", f"{m[0]:.6f}", f"{m[1]:.6f}", f"{m[2]:.6f}"])
    return 0


def cmd_report(args) -> int:
    rows = read_summary(args.indir)
    print(format_summary(rows))
    if not args.no_plots:
        paths = plot_curves(args.indir)
        print(f"{len(paths)} plot(s) written to {args.indir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mtt", description="Multi-target tracking experiments (PHD/CPHD family).")
    p.add_argument("-v", "--verbose", action="store_true", help="log filter warnings")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sim", help="simulate truth and measurement scans")
    s.add_argument("--scenario", help="scenario JSON (default: packaged five-target scenario)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--lambda", dest="clutter", type=float, help="override the clutter rate")
    s.add_argument("--noise", choices=("stochastic", "deterministic"), default="stochastic",
                   help="truth propagation mode")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sim)

    r = sub.add_parser("run", help="Monte-Carlo comparison of filters")
    r.add_argument("--config", help="ExperimentConfig JSON; flags below override it")
    r.add_argument("--scenario")
    r.add_argument("--filters", help=f"comma list from {','.join(FILTER_NAMES)}")
    r.add_argument("--lambda", dest="clutter", help="comma list of clutter rates")
    r.add_argument("--runs", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--workers", type=int, help="worker processes (results do not depend on this)")
    r.add_argument("--out")
    r.add_argument("--timing", action="store_true",
                   help="fill the wall-clock columns of summary.csv (makes it machine-dependent)")
    r.add_argument("--no-plots", action="store_true")
    r.set_defaults(func=cmd_run)

    o = sub.add_parser("ospa", help="OSPA between truth and estimate CSVs")
    o.add_argument("--truth", required=True)
    o.add_argument("--est", required=True)
    o.add_argument("--order", type=float, default=2.0)
    o.add_argument("--cutoff", type=float, default=150.0)
    o.set_defaults(func=cmd_ospa)

    rep = sub.add_parser("report", help="print the summary of a results directory and redraw plots")
    rep.add_argument("--in", dest="indir", required=True)
    rep.add_argument("--no-plots", action="store_true")
    rep.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"mtt: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
