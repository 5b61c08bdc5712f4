"""Multi-seed experiment orchestration and aggregation."""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .metrics import METRIC_COLUMNS, ExperimentRecord, ensure_dir, fmt

AGGREGATE_COLUMNS = ("algo", "iteration", "env_steps", "metric", "mean", "lo", "hi")
AGGREGATED_METRICS = ("r_c", "r_fp", "aes", "epsilon")
BAND = "mean +/- sample std (ddof=1) across seeds"

DEFAULTS = {
    "mode": "tabular",
    "env": "integrator",
    "algos": ["baseline", "lss", "ess"],
    "alpha": 0.2,
    "iters": 50,
    "steps_per_iter": 100_000,
    "steps": 200_000,
    "workers": 1,
    "deep": {},
}


class SuiteError(RuntimeError):
    """A child run failed; the message names the run and the cause."""


def load_config(path) -> dict:
    """Read a JSON suite config and fill in defaults."""
    with open(path) as fh:
        cfg = json.load(fh)
    return normalize_config(cfg)


def normalize_config(cfg: dict) -> dict:
    out = {**DEFAULTS, **cfg}
    if isinstance(out["algos"], str):
        out["algos"] = [out["algos"]]
    if out["mode"] not in ("tabular", "deep"):
        raise ValueError("mode must be 'tabular' or 'deep'")
    return out


def env_settings(cfg: dict) -> dict:
    return {k: cfg[k] for k in ("env", "dt", "grid", "slip_prob", "time_limit", "gamma",
                                "num_states", "perturb_prob", "num_actions", "reset_box")
            if k in cfg}


def run_one(cfg: dict, algo: str, seed: int) -> ExperimentRecord:
    """Execute one (algo, seed) run described by a normalised config."""
    if cfg["mode"] == "tabular":
        from .envs import make_task
        from .tabular import run_tabular

        task = make_task(env_settings(cfg))
        return run_tabular(task, algo, cfg["alpha"], int(cfg["steps_per_iter"]),
                           int(cfg["iters"]), seed).record
    from .deep.runner import DeepConfig, run_actor_critic

    env = {k: v for k, v in env_settings(cfg).items() if k != "env"}
    deep = DeepConfig.from_dict({**cfg["deep"], "steps": int(cfg["steps"]), "env": env})
    return run_actor_critic(algo, cfg["alpha"], deep, seed).record


def _child(args):
    cfg, algo, seed = args
    try:
        return algo, seed, run_one(cfg, algo, seed).rows, None
    except Exception as exc:  # reported by the parent with the run's name
        return algo, seed, None, f"{type(exc).__name__}: {exc}"


def parse_seeds(text: str) -> list[int]:
    """``"0..19"`` (inclusive), ``"3"`` or ``"1,4,7"``."""
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..", 1)
        lo, hi = int(lo), int(hi)
        if hi < lo:
            raise ValueError(f"empty seed range {text!r}")
        return list(range(lo, hi + 1))
    return [int(t) for t in text.split(",") if t.strip()]


def aggregate(records: dict[str, dict[int, ExperimentRecord]]) -> list[dict]:
    """Per (algo, iteration, metric): mean and a one-std band across seeds.

    Seeds are visited in sorted order, so the result does not depend on the
    order runs were launched or finished in. NaN entries (e.g. AES before the
    first finished episode) are ignored; an all-NaN column stays NaN.
    """
    rows = []
    for algo in sorted(records):
        by_seed = records[algo]
        seeds = sorted(by_seed)
        lengths = {len(by_seed[s].rows) for s in seeds}
        if len(lengths) != 1:
            raise SuiteError(f"{algo}: runs logged different numbers of evaluation points")
        for i in range(lengths.pop()):
            steps = by_seed[seeds[0]].rows[i]["env_steps"]
            iteration = by_seed[seeds[0]].rows[i]["iteration"]
            for metric in AGGREGATED_METRICS:
                vals = np.array([by_seed[s].rows[i][metric] for s in seeds], dtype=float)
                mean, std = _mean_std(vals)
                rows.append({"algo": algo, "iteration": int(iteration), "env_steps": int(steps),
                             "metric": metric, "mean": mean, "lo": mean - std, "hi": mean + std})
    return rows


def _mean_std(vals: np.ndarray) -> tuple[float, float]:
    vals = vals[~np.isnan(vals)]
    if vals.size == 0:
        return float("nan"), float("nan")
    mean = float(np.mean(vals))
    std = float(np.std(vals, ddof=1)) if vals.size > 1 else 0.0
    return mean, std


def write_aggregate(path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# band: {BAND}\n")
        writer = csv.writer(fh)
        writer.writerow(AGGREGATE_COLUMNS)
        for r in rows:
            writer.writerow([r["algo"], r["iteration"], r["env_steps"], r["metric"],
                             fmt(r["mean"]), fmt(r["lo"]), fmt(r["hi"])])


def read_aggregate(path) -> list[dict]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    out = []
    for r in csv.DictReader(lines):
        out.append({"algo": r["algo"], "iteration": int(r["iteration"]),
                    "env_steps": int(r["env_steps"]), "metric": r["metric"],
                    "mean": float(r["mean"]), "lo": float(r["lo"]), "hi": float(r["hi"])})
    return out


def run_suite(config: dict, seeds, out_dir=None, workers: int | None = None):
    """Run every (algo, seed) pair, then aggregate.

    Returns ``(records, aggregate_rows)`` where ``records[algo][seed]`` is an
    :class:`ExperimentRecord`. With ``out_dir`` the per-seed series go to
    ``raw/<algo>_seed<k>.csv`` and the aggregate to ``aggregate.csv``.
    """
    cfg = normalize_config(config)
    seeds = sorted({int(s) for s in seeds})
    if not seeds:
        raise ValueError("no seeds given")
    jobs = [(cfg, algo, seed) for algo in cfg["algos"] for seed in seeds]
    workers = int(cfg["workers"] if workers is None else workers)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_child, jobs))
    else:
        results = []
        for job in jobs:
            results.append(_child(job))
            if results[-1][3] is not None:
                break
    records: dict[str, dict[int, ExperimentRecord]] = {}
    for algo, seed, rows, err in results:
        if err is not None:
            raise SuiteError(f"run algo={algo} seed={seed} failed: {err}")
        rec = ExperimentRecord({"algo": algo, **cfg}, seed, rows)
        records.setdefault(algo, {})[seed] = rec
    agg = aggregate(records)
    if out_dir is not None:
        out = ensure_dir(out_dir)
        raw = ensure_dir(out / "raw")
        for algo, by_seed in records.items():
            for seed, rec in by_seed.items():
                rec.write_csv(raw / f"{algo}_seed{seed}.csv")
        write_aggregate(out / "aggregate.csv", agg)
        with open(out / "config.json", "w") as fh:
            json.dump({**cfg, "seeds": seeds}, fh, indent=2, sort_keys=True)
    return records, agg


def plot_series(rows: list[dict], metric: str) -> list[dict]:
    """Wide table for one metric: ``iteration, env_steps`` then
    ``<algo>_mean, <algo>_lo, <algo>_hi`` per algorithm."""
    if metric not in METRIC_COLUMNS:
        raise ValueError(f"unknown metric {metric!r}")
    picked = [r for r in rows if r["metric"] == metric]
    if not picked:
        raise ValueError(f"metric {metric!r} not present in the aggregate")
    algos = sorted({r["algo"] for r in picked})
    table: dict[int, dict] = {}
    for r in picked:
        row = table.setdefault(r["iteration"], {"iteration": r["iteration"],
                                                "env_steps": r["env_steps"]})
        for k in ("mean", "lo", "hi"):
            row[f"{r['algo']}_{k}"] = r[k]
    cols = ["iteration", "env_steps"] + [f"{a}_{k}" for a in algos for k in ("mean", "lo", "hi")]
    return [{c: table[i].get(c, float("nan")) for c in cols} for i in sorted(table)]


def write_plot_data(path, series: list[dict]) -> None:
    cols = list(series[0])
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for row in series:
            writer.writerow([fmt(row[c]) for c in cols])
