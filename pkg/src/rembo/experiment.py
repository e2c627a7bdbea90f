"""Multi-seed orchestration: launching runs and aggregating their metrics."""

import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import pandas as pd

from .config import parse_config_text
from .eval.aggregate import aggregate
from .learner.train import train_run

log = logging.getLogger(__name__)

AGGREGATE_FILE = "aggregate.csv"
REPORT_FILE = "incentive_report.csv"


def _train_one(args):
    cfg, seed, resume = args
    r = train_run(cfg, seed, resume=resume)
    return str(r.run_dir)


def run_train(cfg, resume=True):
    """Train every seed of ``cfg``; seeds run in ``cfg.jobs`` worker processes."""
    jobs = [(cfg, s, resume) for s in cfg.seeds]
    if cfg.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            return [Path(p) for p in pool.map(_train_one, jobs)]
    return [Path(_train_one(j)) for j in jobs]


class EmptyExperiment(FileNotFoundError):
    pass


def find_runs(experiment_dir):
    """``{label: [seed_dir, ...]}`` for runs with a metrics file."""
    root = Path(experiment_dir)
    if not root.is_dir():
        raise EmptyExperiment(f"{root} is not a directory")
    runs = {}
    for metrics in sorted(root.glob("*/seed_*/metrics.csv")):
        runs.setdefault(metrics.parent.parent.name, []).append(metrics.parent)
    if not runs:
        raise EmptyExperiment(f"no runs found under {root}")
    return runs


def _seed_stream(run_dir):
    frame = pd.read_csv(run_dir / "metrics.csv")
    exact = run_dir / "exact.csv"
    if exact.exists():
        frame = frame.merge(pd.read_csv(exact).drop(columns=["seed"]), on="step", how="left")
    return frame


def _common_grid(streams):
    """Restrict streams to the steps every seed reached (unfinished seeds are shorter)."""
    steps = set(streams[0]["step"])
    for s in streams[1:]:
        steps &= set(s["step"])
    return [s[s["step"].isin(steps)].reset_index(drop=True) for s in streams]


def run_eval(experiment_dir, expected_seeds=None):
    """Aggregate every algorithm in an experiment directory.

    Writes ``aggregate.csv`` (``algo, step, metric, median, q25, q75``) and a
    per-run final incentive report; returns the aggregate frame.
    """
    root = Path(experiment_dir)
    runs = find_runs(root)
    parts, report = [], []
    for label, dirs in runs.items():
        complete = [d for d in dirs if (d / "final_estimates.csv").exists()]
        if expected_seeds is not None and len(complete) < expected_seeds:
            warnings.warn(f"{label}: only {len(complete)} of {expected_seeds} seeds completed", stacklevel=2)
        use = complete or dirs
        if len(use) < len(dirs):
            warnings.warn(f"{label}: ignoring {len(dirs) - len(use)} unfinished seed(s)", stacklevel=2)
        streams = [_seed_stream(d) for d in use]
        streams = [s for s in streams if len(s)]
        if not streams:
            warnings.warn(f"{label}: no evaluation rows yet", stacklevel=2)
            continue
        streams = _common_grid(streams)
        metrics = [c for c in streams[0].columns if c not in ("step", "seed", "epsilon")]
        agg = aggregate(streams, metrics)
        agg.insert(0, "algo", label)
        parts.append(agg)
        for d, s in zip(use, streams):
            row = {"algo": label, "seed": int(s["seed"].iloc[-1]), "step": int(s["step"].iloc[-1])}
            row.update({m: float(s[m].iloc[-1]) for m in metrics})
            report.append(row)
    if not parts:
        raise EmptyExperiment(f"no evaluation rows under {root}")
    out = pd.concat(parts, ignore_index=True)
    out.to_csv(root / AGGREGATE_FILE, index=False, float_format="%.10g")
    pd.DataFrame(report).to_csv(root / REPORT_FILE, index=False, float_format="%.10g")
    return out


def final_values(experiment_dir, label, metric):
    """Last value of ``metric`` for every seed of one algorithm."""
    vals = []
    for d in find_runs(experiment_dir).get(label, []):
        s = _seed_stream(d)
        vals.append(float(s[metric].iloc[-1]))
    return np.array(vals)


def load_run_config(run_dir):
    return parse_config_text((Path(run_dir) / "config.cfg").read_text())
