"""Specification-quality metrics and per-run records."""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

METRIC_COLUMNS = ("iteration", "env_steps", "r_c", "r_fp", "aes", "epsilon")


def fmt(x) -> str:
    """Float formatting shared by every CSV writer (9 significant digits)."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return f"{float(x):.9g}"


@dataclass
class SafeSetEstimate:
    member: np.ndarray
    alpha: float
    source: str = "oracle"

    def __post_init__(self):
        self.member = np.asarray(self.member, dtype=bool).reshape(-1)

    def __len__(self) -> int:
        return int(self.member.sum())

    def __contains__(self, state) -> bool:
        return bool(self.member[state])

    def restrict(self, mask) -> "SafeSetEstimate":
        return SafeSetEstimate(self.member[np.asarray(mask, dtype=bool)], self.alpha, self.source)

    def issubset(self, other: "SafeSetEstimate") -> bool:
        return bool(np.all(~self.member | other.member))


def ratio_correct(estimate: SafeSetEstimate, truth: SafeSetEstimate) -> float:
    """``|S_hat & S*| / |S*|``."""
    est, tru = _aligned(estimate, truth)
    n_true = int(tru.sum())
    if n_true == 0:
        raise ValueError("true safe set is empty; r_c is undefined")
    return float(np.sum(est & tru)) / n_true


def ratio_false_positive(estimate: SafeSetEstimate, truth: SafeSetEstimate,
                         total_states: int | None = None) -> float:
    """``|S_hat & S*^c| / |S|``; ``|S|`` defaults to the shared grid size."""
    est, tru = _aligned(estimate, truth)
    total = est.size if total_states is None else int(total_states)
    if total <= 0:
        raise ValueError("total_states must be positive")
    return float(np.sum(est & ~tru)) / total


def _aligned(a: SafeSetEstimate, b: SafeSetEstimate):
    if a.member.shape != b.member.shape:
        raise ValueError(
            f"estimate covers {a.member.size} states but truth covers {b.member.size}")
    return a.member, b.member


class EpisodeLog:
    """Outcomes of the most recent episodes (1 = safe)."""

    def __init__(self, maxlen: int = 100):
        self._ring: deque[int] = deque(maxlen=maxlen)
        self.total = 0

    def record(self, safe: bool) -> None:
        self._ring.append(1 if safe else 0)
        self.total += 1

    def extend(self, outcomes) -> None:
        for o in outcomes:
            self.record(bool(o))

    def __len__(self) -> int:
        return len(self._ring)

    @property
    def outcomes(self) -> list[int]:
        return list(self._ring)


def episode_safety(log: EpisodeLog) -> float:
    """Average episode safety; NaN until one episode has finished."""
    if len(log) == 0:
        return float("nan")
    return float(np.mean(log.outcomes))


@dataclass
class ExperimentRecord:
    """Metric time series of one run."""

    config: dict
    seed: int
    rows: list[dict] = field(default_factory=list)

    def log(self, **row) -> None:
        self.rows.append({k: row.get(k, float("nan")) for k in METRIC_COLUMNS})

    def series(self, metric: str) -> np.ndarray:
        return np.array([row[metric] for row in self.rows], dtype=float)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(METRIC_COLUMNS)
            for row in self.rows:
                writer.writerow([fmt(row[k]) for k in METRIC_COLUMNS])

    @classmethod
    def read_csv(cls, path, config=None, seed=0) -> "ExperimentRecord":
        rec = cls(config or {}, seed)
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                rec.rows.append({k: float(row[k]) for k in METRIC_COLUMNS})
        return rec


def write_safe_set_csv(path, states, coords, coord_names, values, member) -> None:
    """Safe-set table: ``state_index, <coords...>, v_star, in_safe_set``."""
    names = list(coord_names)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["state_index", *names, "v_star", "in_safe_set"])
        for i, s in enumerate(states):
            c = [] if coords is None else [fmt(v) for v in coords[i]]
            writer.writerow([int(s), *c, fmt(values[i]), int(bool(member[i]))])


def read_safe_set_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns ``(state_index, v_star, in_safe_set)`` arrays."""
    idx, val, mem = [], [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            idx.append(int(row["state_index"]))
            val.append(float(row["v_star"]))
            mem.append(int(row["in_safe_set"]))
    return np.array(idx, dtype=int), np.array(val), np.array(mem, dtype=bool)


def compare_safe_set_files(estimate_path, truth_path) -> dict:
    ei, _, em = read_safe_set_csv(estimate_path)
    ti, _, tm = read_safe_set_csv(truth_path)
    if not np.array_equal(np.sort(ei), np.sort(ti)):
        raise ValueError("estimate and truth files cover different states")
    em = em[np.argsort(ei)]
    tm = tm[np.argsort(ti)]
    est = SafeSetEstimate(em, float("nan"), "file")
    tru = SafeSetEstimate(tm, float("nan"), "oracle")
    return {
        "r_c": ratio_correct(est, tru),
        "r_fp": ratio_false_positive(est, tru),
        "num_states": int(em.size),
        "estimate_size": int(em.sum()),
        "truth_size": int(tm.sum()),
    }


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
