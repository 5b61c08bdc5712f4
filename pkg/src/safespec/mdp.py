"""Augmented reachability MDP: finite transition model, stage cost and Bellman operator.

Value tables only store the ``x = 1`` slice of the augmented state ``(s, x)``.
Once the flag drops to zero both the stage cost and every successor value are
zero, so the ``x = 0`` slice is identically zero and carries no information.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np
import scipy.sparse as sp

ROW_TOL = 1e-12


class MdpError(ValueError):
    """Raised for malformed transition models, policies or value tables."""


@dataclass(frozen=True)
class AugmentedState:
    state: object
    flag: int = 1

    def step(self, next_state: object, in_target: bool) -> "AugmentedState":
        return AugmentedState(next_state, flag_step(in_target, self.flag))


@dataclass(frozen=True)
class StepResult:
    next_state: object
    target_hit: int
    done: int


@dataclass
class Trajectory:
    """One episode: ``(state, action, target_hit, next_state)`` tuples."""

    steps: list = field(default_factory=list)
    terminated: bool = False
    truncated: bool = False

    def append(self, state, action, target_hit, next_state) -> None:
        if target_hit and any(step[2] for step in self.steps):
            raise MdpError("episode already ended on a target visit")
        self.steps.append((state, action, int(target_hit), next_state))

    @property
    def safe(self) -> bool:
        return not any(step[2] for step in self.steps)

    def __len__(self) -> int:
        return len(self.steps)


def stage_cost(in_target: bool, flag: int) -> int:
    """``d(s, x) = x * 1_G(s)``."""
    return int(flag) * int(bool(in_target))


def flag_step(in_target: bool, flag: int) -> int:
    """``x_{t+1} = x_t * 1_{G^c}(s_t)``."""
    if flag not in (0, 1):
        raise MdpError(f"flag must be 0 or 1, got {flag!r}")
    return int(flag) * (0 if in_target else 1)


@dataclass(frozen=True, eq=False)
class FiniteMdp:
    """Finite MDP with a target (unsafe) set and absorbing terminal states.

    ``transition`` is a CSR matrix of shape ``(num_states * num_actions,
    num_states)``; row ``s * num_actions + a`` holds ``p(. | s, a)``.
    """

    num_states: int
    num_actions: int
    transition: sp.csr_matrix
    target: np.ndarray
    terminal: np.ndarray
    gamma: float = 1.0
    coords: np.ndarray | None = None
    coord_names: tuple[str, ...] = ()

    def __post_init__(self):
        S, A = self.num_states, self.num_actions
        if S <= 0 or A <= 0:
            raise MdpError("need at least one state and one action")
        P = sp.csr_matrix(self.transition, dtype=float)
        P.sum_duplicates()
        P.eliminate_zeros()
        if P.shape != (S * A, S):
            raise MdpError(f"transition shape {P.shape} != {(S * A, S)}")
        if P.nnz and P.data.min() < 0:
            raise MdpError("negative transition probability")
        sums = np.asarray(P.sum(axis=1)).ravel()
        bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_TOL)
        if bad.size:
            s, a = divmod(int(bad[0]), A)
            raise MdpError(f"row (s={s}, a={a}) sums to {sums[bad[0]]!r}")
        target = np.asarray(self.target, dtype=bool).reshape(-1)
        terminal = np.asarray(self.terminal, dtype=bool).reshape(-1)
        if target.shape != (S,) or terminal.shape != (S,):
            raise MdpError("target/terminal masks must cover every state")
        if np.any(target & terminal):
            raise MdpError("a state cannot be both target and terminal")
        for s in np.flatnonzero(terminal):
            rows = P[s * A:(s + 1) * A]
            if not np.allclose(rows[:, [s]].toarray(), 1.0, atol=ROW_TOL, rtol=0):
                raise MdpError(f"terminal state {s} is not absorbing")
        if not 0.0 < self.gamma <= 1.0:
            raise MdpError(f"discount must lie in (0, 1], got {self.gamma}")
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "terminal", terminal)
        if self.coords is not None:
            coords = np.asarray(self.coords, dtype=float)
            if coords.ndim == 1:
                coords = coords[:, None]
            if coords.shape[0] != S:
                raise MdpError("coords must have one row per state")
            object.__setattr__(self, "coords", coords)

    @classmethod
    def from_dense(cls, P, target, terminal, gamma=1.0, **kwargs) -> "FiniteMdp":
        P = np.asarray(P, dtype=float)
        S, A, _ = P.shape
        return cls(S, A, sp.csr_matrix(P.reshape(S * A, S)), target, terminal, gamma, **kwargs)

    @property
    def absorbing(self) -> np.ndarray:
        return self.target | self.terminal

    def action_matrix(self, a: int) -> sp.csr_matrix:
        """``S x S`` transition matrix of a fixed action."""
        return self.transition[a::self.num_actions]

    def action_matrices(self) -> list[sp.csr_matrix]:
        return [self.action_matrix(a) for a in range(self.num_actions)]

    def policy_matrix(self, policy) -> sp.csr_matrix:
        """State-to-state transition matrix under a stochastic policy."""
        pi = check_policy(policy, self.num_states, self.num_actions)
        weights = sp.diags(pi.reshape(-1))
        # collapse rows (s, a) -> s with weights pi(a|s)
        collapse = sp.csr_matrix(
            (np.ones(self.num_states * self.num_actions),
             (np.repeat(np.arange(self.num_states), self.num_actions),
              np.arange(self.num_states * self.num_actions))),
            shape=(self.num_states, self.num_states * self.num_actions),
        )
        return (collapse @ weights @ self.transition).tocsr()

    def expected_next(self, values) -> np.ndarray:
        """``sum_s' p(s'|s,a) values[s']`` as an ``(S, A)`` array."""
        return (self.transition @ np.asarray(values, dtype=float)).reshape(
            self.num_states, self.num_actions)

    def to_dict(self) -> dict:
        P = self.transition.tocoo()
        triples = [
            [int(r // self.num_actions), int(r % self.num_actions), int(c), float(p)]
            for r, c, p in zip(P.row, P.col, P.data)
        ]
        triples.sort()
        out = {
            "num_states": self.num_states,
            "num_actions": self.num_actions,
            "transitions": triples,
            "target": np.flatnonzero(self.target).tolist(),
            "terminal": np.flatnonzero(self.terminal).tolist(),
            "gamma": self.gamma,
        }
        if self.coords is not None:
            out["coords"] = self.coords.tolist()
            out["coord_names"] = list(self.coord_names)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "FiniteMdp":
        S, A = int(data["num_states"]), int(data["num_actions"])
        rows, cols, vals = [], [], []
        for s, a, s2, p in data["transitions"]:
            rows.append(int(s) * A + int(a))
            cols.append(int(s2))
            vals.append(float(p))
        P = sp.csr_matrix((vals, (rows, cols)), shape=(S * A, S))
        target = _mask(data.get("target", []), S)
        terminal = _mask(data.get("terminal", []), S)
        coords = data.get("coords")
        return cls(S, A, P, target, terminal, float(data.get("gamma", 1.0)),
                   coords=None if coords is None else np.asarray(coords, dtype=float),
                   coord_names=tuple(data.get("coord_names", ())))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "FiniteMdp":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _mask(indices: Iterable[int], n: int) -> np.ndarray:
    mask = np.zeros(n, dtype=bool)
    mask[list(indices)] = True
    return mask


def uniform_policy(num_states: int, num_actions: int) -> np.ndarray:
    return np.full((num_states, num_actions), 1.0 / num_actions)


def deterministic_policy(actions, num_actions: int) -> np.ndarray:
    actions = np.asarray(actions, dtype=int)
    pi = np.zeros((actions.size, num_actions))
    pi[np.arange(actions.size), actions] = 1.0
    return pi


def check_policy(policy, num_states: int, num_actions: int) -> np.ndarray:
    pi = np.asarray(policy, dtype=float)
    if pi.shape != (num_states, num_actions):
        raise MdpError(f"policy shape {pi.shape} != {(num_states, num_actions)}")
    if pi.min() < 0 or np.abs(pi.sum(axis=1) - 1.0).max() > ROW_TOL:
        raise MdpError("policy rows must be probability vectors")
    return pi


def bellman_apply(mdp: FiniteMdp, policy, values) -> np.ndarray:
    """One application of the policy Bellman operator on the ``x = 1`` slice.

    Terminal states map to 0. Target states map to 1 because their successors
    carry flag 0. Elsewhere the result is ``gamma * E_pi[V(s')]``.
    """
    V = np.asarray(values, dtype=float)
    if V.shape != (mdp.num_states,):
        raise MdpError(f"value table shape {V.shape} != {(mdp.num_states,)}")
    pi = check_policy(policy, mdp.num_states, mdp.num_actions)
    out = mdp.gamma * np.sum(pi * mdp.expected_next(V), axis=1)
    out[mdp.target] = 1.0
    out[mdp.terminal] = 0.0
    return out
