"""Monte-Carlo experiments: run filters on simulated scans, score, report.

A job is one (clutter rate, run index) pair.  The job simulates truth and
scans once and feeds the same data to every selected filter, so filters are
compared on identical inputs.  Every random stream is derived from the master
seed, the clutter rate and the run index (plus a fixed per-filter code for the
filter's own stream), which makes results independent of how jobs are spread
over worker processes.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .auxiliary import N_DETECTED, N_UNDETECTED, ProposalError, UAcphdFilter, UAphdFilter
from .metrics import OspaParams, ospa
from .scenario import Scenario, load_scenario, simulate
from .smc import N_BIRTH, N_SURVIVE, SmcCphdFilter, SmcPhdFilter

log = logging.getLogger(__name__)

FILTER_NAMES = ("smc-phd", "smc-cphd", "u-aphd", "u-acphd")
# fixed codes keep a filter's random stream stable when the selection changes
FILTER_CODES = {name: i + 1 for i, name in enumerate(FILTER_NAMES)}
SUMMARY_FIELDS = ("filter", "lambda", "mean_ospa", "mean_loc", "mean_card", "time_mean_s", "time_sd_s")
CURVE_FIELDS = ("step", "ospa", "loc", "card", "birth_picks")
EXCLUDED_FIELDS = ("filter", "lambda", "run", "step", "reason")


@dataclass
class ExperimentConfig:
    scenario: str | None = None  # None: packaged default scenario
    filters: list = field(default_factory=lambda: list(FILTER_NAMES))
    runs: int = 25
    seed: int = 42
    clutter_rates: list = field(default_factory=lambda: [10.0])
    n_detected: int = N_DETECTED
    n_undetected: int = N_UNDETECTED
    n_survive: int = N_SURVIVE
    n_birth: int = N_BIRTH
    ospa_order: float = 2.0
    ospa_cutoff: float = 150.0
    workers: int = 1
    timing: bool = False
    out: str = "results"

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        unknown = [f for f in self.filters if f not in FILTER_CODES]
        if unknown or not self.filters:
            raise ValueError(f"unknown filter(s) {unknown}; choose from {', '.join(FILTER_NAMES)}")
        if any(lam < 0 for lam in self.clutter_rates):
            raise ValueError("clutter rates must be nonnegative")
        self.clutter_rates = [float(lam) for lam in self.clutter_rates]

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        return cls(**json.loads(Path(path).read_text()))

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def make_filter(name: str, scen: Scenario, config: ExperimentConfig):
    models = scen.models
    if name == "smc-phd":
        return SmcPhdFilter(models, config.n_survive, config.n_birth)
    if name == "smc-cphd":
        return SmcCphdFilter(models, config.n_survive, config.n_birth)
    if name == "u-aphd":
        return UAphdFilter(models, config.n_detected, config.n_undetected)
    if name == "u-acphd":
        return UAcphdFilter(models, config.n_detected, config.n_undetected)
    raise ValueError(f"unknown filter {name!r}")


def _lambda_key(lam: float) -> int:
    return int(round(lam * 1000))


def data_rng(seed: int, lam: float, run: int) -> np.random.Generator:
    """Stream for truth and scans of one run; shared by all filters."""
    return np.random.default_rng(np.random.SeedSequence([seed, _lambda_key(lam), run]))


def filter_rng(seed: int, lam: float, run: int, name: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, _lambda_key(lam), run, FILTER_CODES[name]]))


@dataclass
class RunRecord:
    """Per-step scores of one filter on one run."""

    ospa: np.ndarray
    loc: np.ndarray
    card: np.ndarray
    picks: np.ndarray
    step_times: np.ndarray
    diverged_at: int | None = None  # 1-based step
    reason: str = ""


def run_filter(name: str, scen: Scenario, truth, scans, config: ExperimentConfig, rng) -> RunRecord:
    filt = make_filter(name, scen, config)
    params = OspaParams(config.ospa_order, config.ospa_cutoff)
    K = len(scans)
    out = np.zeros((3, K))
    picks = np.zeros(K, dtype=int)
    times = np.zeros(K)
    state = filt.initial_state()
    for k, Z in enumerate(scans):
        t0 = time.perf_counter()
        try:
            state, est = filt.step(state, Z, rng)
        except (FloatingPointError, np.linalg.LinAlgError, ProposalError) as exc:
            log.warning("%s diverged at step %d: %s", name, k + 1, exc)
            return RunRecord(*out, picks, times, k + 1, type(exc).__name__)
        times[k] = time.perf_counter() - t0
        if getattr(state, "diverged", False):
            return RunRecord(*out, picks, times, k + 1, "cardinality update failed")
        r = ospa(truth.at(k + 1), est, params)
        out[:, k] = r.total, r.loc, r.card
        picks[k] = state.birth_pick_count
    return RunRecord(out[0], out[1], out[2], picks, times)


def run_job(config: ExperimentConfig, lam: float, run: int) -> dict:
    """All selected filters on one simulated run; returns {filter: RunRecord}."""
    scen = load_scenario(config.scenario).with_clutter(lam)
    truth, scans = simulate(scen, data_rng(config.seed, lam, run))
    return {name: run_filter(name, scen, truth, scans, config, filter_rng(config.seed, lam, run, name))
            for name in config.filters}


def _run_job_star(args):
    return run_job(*args)


@dataclass
class CellResult:
    """All runs of one filter at one clutter rate."""

    filter: str
    lam: float
    records: list  # RunRecord per run index

    @property
    def included(self) -> list:
        return [r for r in self.records if r.diverged_at is None]

    @property
    def excluded(self) -> list:
        return [(i, r) for i, r in enumerate(self.records) if r.diverged_at is not None]

    def curves(self) -> dict:
        """Per-step means over the included runs (NaN if none)."""
        keep = self.included
        K = len(self.records[0].ospa)
        if not keep:
            nan = np.full(K, np.nan)
            return {"ospa": nan, "loc": nan, "card": nan, "birth_picks": nan}
        return {
            "ospa": np.mean([r.ospa for r in keep], axis=0),
            "loc": np.mean([r.loc for r in keep], axis=0),
            "card": np.mean([r.card for r in keep], axis=0),
            "birth_picks": np.mean([r.picks for r in keep], axis=0),
        }

    def summary(self) -> dict:
        c = self.curves()
        keep = self.included
        run_means = [r.step_times.mean() for r in keep]
        run_sds = [r.step_times.std(ddof=1) if len(r.step_times) > 1 else 0.0 for r in keep]
        return {
            "mean_ospa": float(np.mean(c["ospa"])),
            "mean_loc": float(np.mean(c["loc"])),
            "mean_card": float(np.mean(c["card"])),
            "time_mean_s": float(np.mean(run_means)) if keep else float("nan"),
            "time_sd_s": float(np.mean(run_sds)) if keep else float("nan"),
        }


@dataclass
class ResultsTable:
    config: ExperimentConfig
    duration: int
    cells: list = field(default_factory=list)  # CellResult, ordered by lambda then filter selection

    def cell(self, name: str, lam: float) -> CellResult:
        for c in self.cells:
            if c.filter == name and c.lam == float(lam):
                return c
        raise KeyError((name, lam))


def run_experiment(config: ExperimentConfig) -> ResultsTable:
    duration = load_scenario(config.scenario).duration
    jobs = [(config, lam, run) for lam in config.clutter_rates for run in range(config.runs)]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            done = list(pool.map(_run_job_star, jobs))
    else:
        done = [_run_job_star(j) for j in jobs]
    table = ResultsTable(config, duration)
    for li, lam in enumerate(config.clutter_rates):
        block = done[li * config.runs:(li + 1) * config.runs]
        for name in config.filters:
            table.cells.append(CellResult(name, lam, [job[name] for job in block]))
    return table


# -- output ----------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _lam_label(lam: float) -> str:
    return str(int(lam)) if float(lam).is_integer() else repr(float(lam))


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def emit_report(results: ResultsTable | None, outdir, plots: bool = True) -> list:
    """Write summary, per-cell curves, exclusions and SVG plots; returns the paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    cells = results.cells if results is not None else []
    timing = results.config.timing if results is not None else False

    rows = []
    for c in cells:
        s = c.summary()
        t = [_fmt(s["time_mean_s"]), _fmt(s["time_sd_s"])] if timing else ["", ""]
        rows.append([c.filter, _lam_label(c.lam), _fmt(s["mean_ospa"]), _fmt(s["mean_loc"]), _fmt(s["mean_card"])] + t)
    _write_csv(outdir / "summary.csv", SUMMARY_FIELDS, rows)
    written.append(outdir / "summary.csv")

    excl = []
    for c in cells:
        crv = c.curves()
        path = outdir / f"curves_{c.filter}_{_lam_label(c.lam)}.csv"
        _write_csv(path, CURVE_FIELDS, [
            [k + 1] + [_fmt(crv[f][k]) for f in CURVE_FIELDS[1:]] for k in range(results.duration)
        ])
        written.append(path)
        excl += [[c.filter, _lam_label(c.lam), i, r.diverged_at, r.reason] for i, r in c.excluded]
    _write_csv(outdir / "excluded_runs.csv", EXCLUDED_FIELDS, excl)
    written.append(outdir / "excluded_runs.csv")

    if plots and cells:
        written += plot_curves(outdir)
    return written


def read_curves(indir) -> dict:
    """{(filter, lambda label): {column: array}} from the curves files in ``indir``."""
    out = {}
    for path in sorted(Path(indir).glob("curves_*.csv")):
        name, lam = path.stem[len("curves_"):].rsplit("_", 1)
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        out[(name, lam)] = {k: np.array([float(r[k]) for r in rows]) for k in CURVE_FIELDS}
    return out


def read_summary(indir) -> list:
    with open(Path(indir) / "summary.csv", newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def plot_curves(indir) -> list:
    """One SVG per (metric, lambda) with a line per filter.  Output is byte-stable."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    curves = read_curves(indir)
    lams = sorted({lam for _, lam in curves}, key=float)
    labels = {"ospa": "OSPA (m)", "loc": "localization (m)", "card": "cardinality (m)", "birth_picks": "birth picks"}
    written = []
    with matplotlib.rc_context({"svg.hashsalt": "mtt", "svg.fonttype": "none"}):
        for lam in lams:
            for metric, ylabel in labels.items():
                fig, ax = plt.subplots(figsize=(6.4, 4.0))
                for (name, l), cols in sorted(curves.items()):
                    if l == lam:
                        ax.plot(cols["step"], cols[metric], label=name, lw=1.2)
                ax.set_xlabel("time step")
                ax.set_ylabel(ylabel)
                ax.set_title(f"lambda = {lam}")
                ax.legend(fontsize=8)
                fig.tight_layout()
                path = Path(indir) / f"{metric}_lambda{lam}.svg"
                fig.savefig(path, format="svg", metadata={"Date": None})
                plt.close(fig)
                written.append(path)
    return written


def format_summary(rows) -> str:
    """Plain-text table of summary rows (dicts as read from summary.csv)."""
    head = f"{'filter':<10} {'lambda':>6} {'ospa':>8} {'loc':>8} {'card':>8} {'t_mean':>8} {'t_sd':>8}"
    lines = [head, "-" * len(head)]
    for r in rows:
        def num(key):
            return f"{float(r[key]):8.3f}" if r[key] not in ("", None) else f"{'-':>8}"
        lines.append(f"{r['filter']:<10} {r['lambda']:>6} {num('mean_ospa')} {num('mean_loc')} {num('mean_card')} "
                     f"{num('time_mean_s')} {num('time_sd_s')}")
    return "\n".join(lines)
