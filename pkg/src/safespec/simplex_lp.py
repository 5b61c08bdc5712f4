"""Linear programs over the probability simplex with one linear inequality.

    optimise  c . pi   s.t.  q . pi <= b,  pi >= 0,  sum(pi) = 1

A basic feasible solution of this LP has at most two nonzero entries: either
a pure action with ``q_a <= b``, or a mixture of two actions that makes the
inequality tight. Enumerating those candidates solves it exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MINIMIZE = "minimize"
MAXIMIZE = "maximize"

# budgets this far below min(q) are treated as rounding noise on a feasible LP
FEAS_TOL = 1e-12
TIE_TOL = 1e-14


class InfeasibleLpError(ValueError):
    pass


@dataclass(frozen=True)
class PolicyLp:
    objective: np.ndarray
    constraint_coeffs: np.ndarray
    budget: float
    sense: str = MINIMIZE

    def __post_init__(self):
        c = np.asarray(self.objective, dtype=float).reshape(-1)
        q = np.asarray(self.constraint_coeffs, dtype=float).reshape(-1)
        if c.shape != q.shape or c.size == 0:
            raise ValueError("objective and constraint rows must match and be non-empty")
        if self.sense not in (MINIMIZE, MAXIMIZE):
            raise ValueError(f"unknown sense {self.sense!r}")
        object.__setattr__(self, "objective", c)
        object.__setattr__(self, "constraint_coeffs", q)

    @property
    def feasible(self) -> bool:
        return self.budget >= self.constraint_coeffs.min() - FEAS_TOL


def solve_policy_lp(lp: PolicyLp) -> tuple[np.ndarray, float]:
    """Optimal vertex of ``lp`` and its objective value.

    Ties go to the lowest first-support index, then the lowest second-support
    index, with pure actions ahead of mixtures that start at the same index.
    """
    pi, value = _solve(lp.objective.tolist(), lp.constraint_coeffs.tolist(),
                       float(lp.budget), lp.sense == MAXIMIZE)
    return pi, value


def solve_row(objective, coeffs, budget, maximize=False) -> tuple[np.ndarray, float]:
    """Same as :func:`solve_policy_lp` without building a ``PolicyLp``."""
    return _solve(list(objective), list(coeffs), float(budget), maximize)


def _solve(c: list, q: list, b: float, maximize: bool):
    n = len(c)
    sign = -1.0 if maximize else 1.0
    best_val = np.inf
    best = None
    qmin = min(q)
    if not b >= qmin - FEAS_TOL:
        raise InfeasibleLpError(f"budget {b!r} is below min coefficient {qmin!r}")
    if b < qmin:
        # feasible only up to rounding: the least-cost pure action is the single point
        b = qmin
    for i in range(n):
        qi = q[i]
        if qi <= b:
            val = sign * c[i]
            if val < best_val - TIE_TOL:
                best_val, best = val, (i, i, 1.0)
        for j in range(i + 1, n):
            qj = q[j]
            if qi < b < qj:
                w = (b - qi) / (qj - qi)  # weight on j, tight constraint
            elif qj < b < qi:
                w = (qi - b) / (qi - qj)  # weight on j, tight constraint
            else:
                continue
            val = sign * (c[i] + w * (c[j] - c[i]))
            if val < best_val - TIE_TOL:
                best_val, best = val, (i, j, w)
    i, j, w = best
    pi = np.zeros(n)
    if i == j:
        pi[i] = 1.0
        value = c[i]
    else:
        pi[i] = 1.0 - w
        pi[j] = w
        value = c[i] + w * (c[j] - c[i])
    return pi, float(value)
