"""Tabular Lyapunov safety specification (LSS), its exploratory variant (ESS)
and the unconstrained Q-learning baseline."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import _kernel
from .mdp import FiniteMdp, uniform_policy
from .metrics import (EpisodeLog, ExperimentRecord, SafeSetEstimate, episode_safety,
                      ratio_correct, ratio_false_positive)
from .oracle import exact_q_tables, optimal_unsafety, safe_set
from .simplex_lp import solve_row

ALGOS = ("baseline", "lss", "ess")
QTABLE_MAGIC = b"RSPECQT1"
LR_EXPONENT = 0.7


@dataclass
class QTables:
    q_v: np.ndarray
    q_t: np.ndarray
    visits: np.ndarray

    @classmethod
    def initial(cls, num_states: int, num_actions: int, rng=None, low: float = 0.99) -> "QTables":
        """``q_v ~ U[low, 1]``, ``q_t = 0``."""
        rng = np.random.default_rng(rng)
        return cls(rng.uniform(low, 1.0, size=(num_states, num_actions)),
                   np.zeros((num_states, num_actions)),
                   np.zeros((num_states, num_actions), dtype=np.int64))

    def copy(self) -> "QTables":
        return QTables(self.q_v.copy(), self.q_t.copy(), self.visits.copy())


@dataclass
class IterationState:
    ss_policy: np.ndarray
    exploratory_policy: np.ndarray
    tables: QTables
    epsilon: float
    iteration: int


def learning_rate(visits) -> float:
    """Robbins-Monro step ``1 / (1 + n)^0.7``."""
    return 1.0 / (1.0 + visits) ** LR_EXPONENT


def q_update(tables: QTables, transition, policy, learning_rate: float, *,
             gamma: float = 1.0, next_terminal: bool = False) -> QTables:
    """Expected-SARSA style update of ``q_v`` and ``q_t`` (in place).

    ``transition = (s, a, target_hit, s_next)``; the bootstrap averages the
    successor row under ``policy``.
    """
    if not 0.0 < learning_rate <= 1.0:
        raise ValueError(f"learning rate must lie in (0, 1], got {learning_rate}")
    s, a, hit, s2 = transition
    tables.visits[s, a] += 1
    if hit:
        tables.q_v[s, :] = 1.0
        tables.q_t[s, :] = 0.0
        return tables
    if next_terminal:
        tables.q_v[s2, :] = 0.0
        tables.q_t[s2, :] = 0.0
        nv = nt = 0.0
    else:
        pi = np.asarray(policy)[s2]
        nv = float(pi @ tables.q_v[s2])
        nt = float(pi @ tables.q_t[s2])
    tau = learning_rate
    tables.q_v[s, a] = (1 - tau) * tables.q_v[s, a] + tau * gamma * nv
    tables.q_t[s, a] = (1 - tau) * tables.q_t[s, a] + tau * (1 + gamma * nt)
    return tables


def lyapunov_q(tables: QTables, epsilon: float) -> np.ndarray:
    """``Q_L = Q_V + epsilon * Q_T``."""
    if epsilon == 0:
        return tables.q_v.copy()
    return tables.q_v + epsilon * tables.q_t


def estimated_values(tables: QTables, policy) -> tuple[np.ndarray, np.ndarray]:
    pi = np.asarray(policy)
    return np.sum(pi * tables.q_v, axis=1), np.sum(pi * tables.q_t, axis=1)


def estimated_safe_set(tables: QTables, policy, alpha: float) -> SafeSetEstimate:
    v_hat, _ = estimated_values(tables, policy)
    return SafeSetEstimate(v_hat <= alpha, alpha, "tabular")


def auxiliary_cost(tables: QTables, ss_policy, alpha: float, hitting=None) -> float:
    """Cost-shaping slack ``min_{s in S0} (alpha - V(s)) / T(s)``.

    ``S0`` is the estimated safe set of ``ss_policy``. States with zero
    hitting time and positive slack impose no bound and are skipped. Returns
    0 when nothing bounds the slack.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    v_hat, t_hat = estimated_values(tables, ss_policy)
    if hitting is not None:
        t_hat = np.asarray(hitting, dtype=float)
    slack = alpha - v_hat
    in_s0 = slack >= 0
    if not in_s0.any():
        return 0.0
    slack, t_hat = slack[in_s0], t_hat[in_s0]
    if np.any(slack == 0):
        return 0.0
    bounded = t_hat > 0
    if not bounded.any():
        return 0.0
    with np.errstate(divide="ignore"):
        return float(np.min(slack[bounded] / t_hat[bounded]))


def _improve(q_v, q_l, budget, current, frozen, maximize):
    new = np.array(current, dtype=float, copy=True)
    for s in range(q_v.shape[0]):
        if frozen is not None and frozen[s]:
            continue
        new[s], _ = solve_row(q_v[s].tolist(), q_l[s].tolist(), budget[s], maximize)
    return new


def _greedy(q_v, current, frozen, maximize):
    new = np.array(current, dtype=float, copy=True)
    idx = np.argmax(q_v, axis=1) if maximize else np.argmin(q_v, axis=1)
    rows = np.arange(q_v.shape[0]) if frozen is None else np.flatnonzero(~frozen)
    new[rows] = 0.0
    new[rows, idx[rows]] = 1.0
    return new


def improve_ss_policy(tables: QTables, epsilon: float, current, frozen=None) -> np.ndarray:
    """Safest policy in the Lyapunov-induced set, solved state by state.

    ``frozen`` marks states (target/terminal) whose rows are kept as is. An
    infinite ``epsilon`` removes the constraint (plain greedy improvement).
    """
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    if np.isinf(epsilon):
        return _greedy(tables.q_v, current, frozen, maximize=False)
    q_l = lyapunov_q(tables, epsilon)
    budget = np.sum(q_l * current, axis=1) + epsilon
    return _improve(tables.q_v, q_l, budget, current, frozen, maximize=False)


def improve_exploratory_policy(tables: QTables, epsilon: float, current,
                               frozen=None) -> np.ndarray:
    """Most aggressive policy in the Lyapunov-induced set.

    ``current`` is the SS-policy that defines the Lyapunov function.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    if np.isinf(epsilon):
        return _greedy(tables.q_v, current, frozen, maximize=True)
    q_l = lyapunov_q(tables, epsilon)
    budget = np.sum(q_l * current, axis=1) + epsilon
    return _improve(tables.q_v, q_l, budget, current, frozen, maximize=True)


# -- learning loop ----------------------------------------------------------

@dataclass
class TabularTask:
    """A finite MDP plus the episodic protocol used to sample it."""

    mdp: FiniteMdp
    reset_states: np.ndarray
    time_limit: int = 1000
    name: str = "mdp"
    _truth: dict = field(default_factory=dict, repr=False)

    @property
    def evaluation_mask(self) -> np.ndarray:
        return ~self.mdp.target

    def truth(self, alpha: float) -> SafeSetEstimate:
        if alpha not in self._truth:
            self._truth[alpha] = safe_set(optimal_unsafety(self.mdp), alpha)
        return self._truth[alpha]


@dataclass
class TabularResult:
    final: IterationState
    record: ExperimentRecord
    history: list[IterationState] = field(default_factory=list)


def behavior_noise(iteration: int, iterations: int, noise: float) -> float:
    """Uniform-mixing weight, linearly annealed to 0 at two thirds of the run."""
    horizon = 2.0 * iterations / 3.0
    if horizon <= 0:
        return 0.0
    return noise * max(0.0, 1.0 - iteration / horizon)


def run_tabular(task: TabularTask, algo: str, alpha: float = 0.2,
                steps_per_iter: int = 10_000, iterations: int = 20, seed: int = 0,
                noise: float = 0.05, base_policy=None,
                keep_history: bool = False) -> TabularResult:
    """Alternate batches of Q-learning steps with one policy-improvement sweep."""
    if algo not in ALGOS:
        raise ValueError(f"unknown algorithm {algo!r}; expected one of {ALGOS}")
    mdp = task.mdp
    S, A = mdp.num_states, mdp.num_actions
    rng = np.random.default_rng(seed)
    tables = QTables.initial(S, A, rng)
    pi_s = uniform_policy(S, A) if base_policy is None else np.array(base_policy, dtype=float)
    pi_e = pi_s.copy()
    frozen = mdp.absorbing
    truth = task.truth(alpha)
    mask = task.evaluation_mask
    truth_eval = truth.restrict(mask)

    P = mdp.transition
    indptr, indices = P.indptr.astype(np.int64), P.indices.astype(np.int64)
    cum = _kernel.row_cumsum(indptr, P.data)
    reset = np.asarray(task.reset_states, dtype=np.int64)
    if reset.size == 0:
        raise ValueError("task has no reset states")

    log = EpisodeLog()
    config = {"algo": algo, "alpha": alpha, "steps_per_iter": steps_per_iter,
              "iterations": iterations, "noise": noise, "env": task.name}
    record = ExperimentRecord(config, seed)
    history = []
    state = int(reset[rng.integers(reset.size)])
    t = 0
    env_steps = 0
    epsilon = float("nan")

    def evaluate(k):
        est = estimated_safe_set(tables, pi_s, alpha).restrict(mask)
        record.log(iteration=k, env_steps=env_steps,
                   r_c=ratio_correct(est, truth_eval),
                   r_fp=ratio_false_positive(est, truth_eval),
                   aes=episode_safety(log), epsilon=epsilon)
        if keep_history:
            history.append(IterationState(pi_s.copy(), pi_e.copy(), tables.copy(), epsilon, k))

    evaluate(0)
    outcomes = np.zeros(steps_per_iter, dtype=np.int8)
    for k in range(iterations):
        eta = behavior_noise(k, iterations, noise)
        executed = pi_e if algo == "ess" else pi_s
        behavior = (1.0 - eta) * executed + eta / A
        behavior_cum = np.cumsum(behavior, axis=1)
        behavior_cum[:, -1] = 1.0
        uniforms = rng.random((steps_per_iter, 3))
        state, t, n_out = _kernel.collect(
            steps_per_iter, indptr, indices, cum, mdp.target, mdp.terminal, reset,
            task.time_limit, mdp.gamma, behavior_cum, pi_s, tables.q_v, tables.q_t,
            tables.visits, LR_EXPONENT, uniforms, state, t, outcomes)
        log.extend(outcomes[:n_out])
        env_steps += steps_per_iter

        if algo == "baseline":
            epsilon = float("nan")
            pi_s = improve_ss_policy(tables, np.inf, pi_s, frozen)
        else:
            epsilon = auxiliary_cost(tables, pi_s, alpha)
            new_s = improve_ss_policy(tables, epsilon, pi_s, frozen)
            if algo == "ess":
                pi_e = improve_exploratory_policy(tables, epsilon, pi_s, frozen)
            pi_s = new_s
        evaluate(k + 1)

    final = IterationState(pi_s, pi_e if algo == "ess" else pi_s.copy(), tables, epsilon, iterations)
    return TabularResult(final, record, history)


def run_lss(task, alpha=0.2, steps_per_iter=10_000, iterations=20, seed=0, **kw):
    return run_tabular(task, "lss", alpha, steps_per_iter, iterations, seed, **kw)


def run_ess(task, alpha=0.2, steps_per_iter=10_000, iterations=20, seed=0, **kw):
    return run_tabular(task, "ess", alpha, steps_per_iter, iterations, seed, **kw)


def run_baseline(task, alpha=0.2, steps_per_iter=10_000, iterations=20, seed=0, **kw):
    return run_tabular(task, "baseline", alpha, steps_per_iter, iterations, seed, **kw)


# -- exact-evaluation regime ------------------------------------------------

@dataclass
class ExactStep:
    """One improvement computed from exact policy evaluation."""

    iteration: int
    epsilon: float
    safe_before: np.ndarray
    safe_after: np.ndarray
    reach_ss: np.ndarray
    reach_exploratory: np.ndarray
    ss_policy: np.ndarray
    exploratory_policy: np.ndarray


def exact_improvements(mdp: FiniteMdp, alpha: float, iterations: int,
                       base_policy=None) -> list[ExactStep]:
    """LSS/ESS improvements with Q-tables replaced by exact DP evaluation."""
    from .oracle import solve_policy_unsafety

    pi = uniform_policy(mdp.num_states, mdp.num_actions) if base_policy is None else base_policy
    frozen = mdp.absorbing
    steps = []
    q_v, q_t = exact_q_tables(mdp, pi)
    for k in range(iterations):
        tables = QTables(q_v, q_t, np.zeros(q_v.shape, dtype=np.int64))
        before = estimated_safe_set(tables, pi, alpha).member
        eps = auxiliary_cost(tables, pi, alpha)
        new_s = improve_ss_policy(tables, eps, pi, frozen)
        new_e = improve_exploratory_policy(tables, eps, pi, frozen)
        reach_e = solve_policy_unsafety(mdp, new_e)
        q_v, q_t = exact_q_tables(mdp, new_s)
        tables_next = QTables(q_v, q_t, tables.visits)
        reach_s = np.sum(new_s * q_v, axis=1)
        after = estimated_safe_set(tables_next, new_s, alpha).member
        steps.append(ExactStep(k, eps, before, after, reach_s, reach_e, new_s, new_e))
        pi = new_s
    return steps


# -- persistence ------------------------------------------------------------

def save_qtables(path, state: IterationState) -> None:
    """Binary dump: magic, ``uint32`` S and A, then float64/int64 arrays (little endian)."""
    t = state.tables
    S, A = t.q_v.shape
    with open(path, "wb") as fh:
        fh.write(QTABLE_MAGIC)
        fh.write(struct.pack("<IId", S, A, float(state.epsilon)))
        for arr, dt in ((t.q_v, "<f8"), (t.q_t, "<f8"), (t.visits, "<i8"),
                        (state.ss_policy, "<f8"), (state.exploratory_policy, "<f8")):
            fh.write(np.ascontiguousarray(arr, dtype=dt).tobytes())


def load_qtables(path) -> IterationState:
    with open(path, "rb") as fh:
        if fh.read(8) != QTABLE_MAGIC:
            raise ValueError(f"{path}: not a q-table dump")
        S, A, eps = struct.unpack("<IId", fh.read(16))
        n = S * A

        def take(dt):
            return np.frombuffer(fh.read(8 * n), dtype=dt).reshape(S, A).copy()

        q_v, q_t, visits = take("<f8"), take("<f8"), take("<i8")
        pi_s, pi_e = take("<f8"), take("<f8")
    return IterationState(pi_s, pi_e, QTables(q_v, q_t, visits), eps, -1)
