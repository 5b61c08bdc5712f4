"""Dynamic-programming ground truth for probabilistic reachability.

All sweeps are Jacobi style: each sweep reads only the previous iterate, so
results do not depend on state ordering.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mdp import FiniteMdp, check_policy
from .metrics import SafeSetEstimate

DEFAULT_TOL = 1e-10
MAX_SWEEPS = 10**6


@dataclass
class ValueTable:
    """Probability of unsafety on the ``x = 1`` slice."""

    values: np.ndarray
    residual: float
    sweeps: int

    def __len__(self) -> int:
        return self.values.size


@dataclass
class HittingTimeTable:
    """Discounted expected number of steps before reaching G or a terminal state."""

    times: np.ndarray
    residual: float
    sweeps: int


def _check_tol(tol):
    if not tol > 0:
        raise ValueError(f"tolerance must be positive, got {tol}")


def _iterate(update, start, tol, max_sweeps):
    """Sweep until the step size and the geometric tail estimate both drop
    below ``tol``; slowly mixing chains make tiny steps long before they
    are close to the fixed point."""
    V = start
    residual = prev = np.inf
    sweeps = 0
    while sweeps < max_sweeps:
        nxt = update(V)
        sweeps += 1
        finite = np.isfinite(nxt) & np.isfinite(V)
        residual = float(np.max(np.abs(nxt[finite] - V[finite]), initial=0.0))
        V = nxt
        if residual == 0.0:
            break
        rate = residual / prev if prev > 0 else 1.0
        prev = residual
        if residual < tol and rate < 1.0 and residual * rate / (1.0 - rate) < tol:
            break
    return V, residual, sweeps


def optimal_unsafety(mdp: FiniteMdp, tol: float = DEFAULT_TOL,
                     max_sweeps: int = MAX_SWEEPS) -> ValueTable:
    """Minimal probability of unsafety ``V*(s, 1)`` by value iteration.

    Iteration starts from 0 off the target set, so with ``gamma = 1`` it
    converges from below to the least fixed point, which is the reachability
    probability.
    """
    _check_tol(tol)
    target, terminal, gamma = mdp.target, mdp.terminal, mdp.gamma
    P = mdp.transition

    def update(V):
        out = gamma * (P @ V).reshape(mdp.num_states, mdp.num_actions).min(axis=1)
        out[target] = 1.0
        out[terminal] = 0.0
        return out

    start = target.astype(float)
    V, residual, sweeps = _iterate(update, start, tol, max_sweeps)
    return ValueTable(V, residual, sweeps)


def greedy_policy(mdp: FiniteMdp, values) -> np.ndarray:
    """Deterministic policy minimising the one-step lookahead of ``values``."""
    q = mdp.expected_next(values)
    pi = np.zeros_like(q)
    pi[np.arange(mdp.num_states), np.argmin(q, axis=1)] = 1.0
    return pi


def policy_unsafety(mdp: FiniteMdp, policy, tol: float = DEFAULT_TOL,
                    max_sweeps: int = MAX_SWEEPS) -> ValueTable:
    """``V^pi(s, 1)`` by iterating the policy Bellman operator."""
    _check_tol(tol)
    P = mdp.policy_matrix(policy)
    target, terminal, gamma = mdp.target, mdp.terminal, mdp.gamma

    def update(V):
        out = gamma * (P @ V)
        out[target] = 1.0
        out[terminal] = 0.0
        return out

    V, residual, sweeps = _iterate(update, target.astype(float), tol, max_sweeps)
    return ValueTable(V, residual, sweeps)


def policy_hitting_time(mdp: FiniteMdp, policy, tol: float = DEFAULT_TOL,
                        max_sweeps: int = MAX_SWEEPS) -> HittingTimeTable:
    """First-hitting time of ``G`` or ``S_term`` by fixed-point iteration.

    States that can avoid absorption forever under ``gamma = 1`` keep growing;
    they are reported as ``inf`` once the sweep cap is hit.
    """
    _check_tol(tol)
    P = mdp.policy_matrix(policy)
    absorbing, gamma = mdp.absorbing, mdp.gamma
    if gamma == 1.0:
        finite = _finite_hitting_states(P, absorbing)
    else:
        finite = np.ones(mdp.num_states, dtype=bool)

    def update(T):
        out = 1.0 + gamma * (P @ T)
        out[absorbing] = 0.0
        out[~finite] = np.inf
        return out

    start = np.where(finite, 0.0, np.inf)
    T, residual, sweeps = _iterate(update, start, tol, max_sweeps)
    return HittingTimeTable(T, residual, sweeps)


# -- exact linear solves ----------------------------------------------------

def _reaches(P: sp.csr_matrix, sources: np.ndarray) -> np.ndarray:
    """States with a positive-probability path into ``sources``."""
    Pt = P.T.tocsr()
    seen = sources.copy()
    frontier = np.flatnonzero(sources)
    while frontier.size:
        preds = Pt[frontier].indices
        new = np.unique(preds[~seen[preds]])
        seen[new] = True
        frontier = new
    return seen


def _finite_hitting_states(P: sp.csr_matrix, absorbing: np.ndarray) -> np.ndarray:
    stuck = ~_reaches(P, absorbing)
    return ~_reaches(P, stuck)


def solve_policy_unsafety(mdp: FiniteMdp, policy) -> np.ndarray:
    """``V^pi(s, 1)`` from a sparse direct solve."""
    P = mdp.policy_matrix(policy)
    V = mdp.target.astype(float)
    live = _reaches(P, mdp.target) & ~mdp.absorbing
    if live.any():
        A = sp.identity(int(live.sum()), format="csc") - mdp.gamma * P[live][:, live]
        b = mdp.gamma * np.asarray(P[live][:, mdp.target].sum(axis=1)).ravel()
        V[live] = _spsolve(A, b)
    return V


def solve_hitting_time(mdp: FiniteMdp, policy) -> np.ndarray:
    """First-hitting time from a sparse direct solve (``inf`` where unbounded)."""
    P = mdp.policy_matrix(policy)
    absorbing = mdp.absorbing
    if mdp.gamma == 1.0:
        finite = _finite_hitting_states(P, absorbing)
    else:
        finite = np.ones(mdp.num_states, dtype=bool)
    T = np.where(finite, 0.0, np.inf)
    live = finite & ~absorbing
    if live.any():
        A = sp.identity(int(live.sum()), format="csc") - mdp.gamma * P[live][:, live]
        T[live] = _spsolve(A, np.ones(int(live.sum())))
    return T


def _spsolve(A, b):
    x = spla.spsolve(sp.csc_matrix(A), b)
    return np.atleast_1d(x)


def exact_q_tables(mdp: FiniteMdp, policy) -> tuple[np.ndarray, np.ndarray]:
    """State-action unsafety and hitting-time tables of ``policy``, solved exactly."""
    check_policy(policy, mdp.num_states, mdp.num_actions)
    V = solve_policy_unsafety(mdp, policy)
    T = solve_hitting_time(mdp, policy)
    q_v = mdp.gamma * mdp.expected_next(V)
    with np.errstate(invalid="ignore"):
        q_t = 1.0 + mdp.gamma * mdp.expected_next(np.where(np.isinf(T), 0.0, T))
    unbounded = mdp.expected_next(np.isinf(T).astype(float)) > 0
    q_t[unbounded] = np.inf
    q_v[mdp.target] = 1.0
    q_v[mdp.terminal] = 0.0
    q_t[mdp.absorbing] = 0.0
    return q_v, q_t


def safe_set(values, alpha: float, source: str = "oracle") -> SafeSetEstimate:
    """Threshold a value table at ``alpha``; ties belong to the set."""
    V = values.values if isinstance(values, ValueTable) else np.asarray(values, dtype=float)
    return SafeSetEstimate(V <= alpha, alpha, source)
