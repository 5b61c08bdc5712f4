"""Randomised double integrator.

State ``(position, velocity)``, scalar acceleration ``u`` in ``[-0.5, 0.5]``.
With probability ``perturb_prob`` the applied acceleration becomes
``0.5 * sign(u)`` (zero stays zero). Everything outside the box
``[-1, 1] x [-0.5, 0.5]`` is the target (unsafe) set; a thin box around the
origin is terminal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..mdp import FiniteMdp, StepResult

Box = tuple[tuple[float, float], tuple[float, float]]


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = 0.1
    action_bound: float = 0.5
    target_box: Box = ((-1.0, 1.0), (-0.5, 0.5))
    terminal_box: Box = ((-0.2, 0.2), (-3.75e-3, 3.75e-3))
    perturb_prob: float = 0.5
    grid: tuple[int, int] = (41, 41)
    grid_box: Box = ((-1.2, 1.2), (-0.6, 0.6))
    num_actions: int = 3
    reset_box: Box = ((-0.6, 0.6), (-0.15, 0.15))
    time_limit: int = 1000
    gamma: float = 1.0 - 1e-4

    def __post_init__(self):
        if self.action_bound <= 0:
            raise ValueError("action_bound must be positive")
        if not 0.0 <= self.perturb_prob <= 1.0:
            raise ValueError("perturb_prob must lie in [0, 1]")
        if min(self.grid) < 3:
            raise ValueError("grid needs at least 3 points per axis")
        if self.num_actions < 2:
            raise ValueError("need at least two action levels")
        (tx0, tx1), (tv0, tv1) = self.terminal_box
        (gx0, gx1), (gv0, gv1) = self.target_box
        if not (gx0 <= tx0 and tx1 <= gx1 and gv0 <= tv0 and tv1 <= gv1):
            raise ValueError("terminal box must lie inside the non-target region")

    def action_levels(self) -> np.ndarray:
        """Evenly spaced levels from ``-action_bound`` to ``action_bound``."""
        n = np.arange(self.num_actions)
        lo, hi = -self.action_bound, self.action_bound
        return (hi - lo) * n / (self.num_actions - 1) + lo


def _inside(box: Box, x, v):
    (x0, x1), (v0, v1) = box
    return (x0 <= x) & (x <= x1) & (v0 <= v) & (v <= v1)


def in_target(config: IntegratorConfig, state) -> bool:
    return not bool(_inside(config.target_box, state[0], state[1]))


def in_terminal(config: IntegratorConfig, state) -> bool:
    return bool(_inside(config.terminal_box, state[0], state[1]))


def perturbed(config: IntegratorConfig, action: float) -> float:
    return config.action_bound * float(np.sign(action))


def euler(config: IntegratorConfig, state, accel: float) -> np.ndarray:
    x, v = state
    return np.array([x + config.dt * v, v + config.dt * accel])


def integrator_step(config: IntegratorConfig, state, action: float, rng=None,
                    perturb: bool | None = None) -> StepResult:
    """One Euler step. ``perturb`` forces a branch; otherwise ``rng`` samples it."""
    action = float(action)
    if abs(action) > config.action_bound + 1e-12:
        raise ValueError(f"action {action} outside [-{config.action_bound}, {config.action_bound}]")
    if perturb is None:
        perturb = rng.random() < config.perturb_prob
    accel = perturbed(config, action) if perturb else action
    nxt = euler(config, state, accel)
    hit = in_target(config, state)
    done = (not hit) and in_terminal(config, nxt)
    return StepResult(nxt, int(hit), int(done))


class IntegratorEnv:
    """Continuous integrator with resets, time limit and a private RNG."""

    def __init__(self, config: IntegratorConfig | None = None, seed=None):
        self.config = config or IntegratorConfig()
        self.rng = np.random.default_rng(seed)
        self.state = None
        self.t = 0

    def reset(self) -> np.ndarray:
        (x0, x1), (v0, v1) = self.config.reset_box
        while True:
            s = np.array([self.rng.uniform(x0, x1), self.rng.uniform(v0, v1)])
            if not in_terminal(self.config, s):
                break
        self.state, self.t = s, 0
        return s.copy()

    def step(self, action: float) -> tuple[StepResult, bool]:
        """Returns the step result and whether the time limit truncated the episode."""
        res = integrator_step(self.config, self.state, action, self.rng)
        self.t += 1
        self.state = res.next_state
        truncated = not res.target_hit and not res.done and self.t >= self.config.time_limit
        return res, truncated


# -- grid discretisation ----------------------------------------------------

def grid_axes(config: IntegratorConfig) -> tuple[np.ndarray, np.ndarray]:
    (x0, x1), (v0, v1) = config.grid_box
    return np.linspace(x0, x1, config.grid[0]), np.linspace(v0, v1, config.grid[1])


def grid_points(config: IntegratorConfig) -> np.ndarray:
    """``(nx * nv, 2)`` grid coordinates, position-major."""
    xs, vs = grid_axes(config)
    X, V = np.meshgrid(xs, vs, indexing="ij")
    return np.column_stack([X.ravel(), V.ravel()])


def _snap(w):
    w = np.where(np.abs(w) < 1e-12, 0.0, w)
    return np.where(np.abs(w - 1.0) < 1e-12, 1.0, w)


def _bilinear(config: IntegratorConfig, x, v):
    """Grid-cell corners and weights for points inside the grid box."""
    xs, vs = grid_axes(config)
    nx, nv = config.grid
    fx = (x - xs[0]) / (xs[1] - xs[0])
    fv = (v - vs[0]) / (vs[1] - vs[0])
    i0 = np.clip(np.floor(fx).astype(int), 0, nx - 2)
    j0 = np.clip(np.floor(fv).astype(int), 0, nv - 2)
    wx = _snap(np.clip(fx - i0, 0.0, 1.0))
    wv = _snap(np.clip(fv - j0, 0.0, 1.0))
    corners = [(i0, j0, (1 - wx) * (1 - wv)), (i0 + 1, j0, wx * (1 - wv)),
               (i0, j0 + 1, (1 - wx) * wv), (i0 + 1, j0 + 1, wx * wv)]
    return [(i * nv + j, w) for i, j, w in corners]


def discretize_integrator(config: IntegratorConfig | None = None) -> FiniteMdp:
    """Grid MDP of the integrator.

    Both perturbation branches are enumerated exactly. Each Euler successor
    is split over the four surrounding grid points with bilinear weights;
    successors leaving the grid box go to one aggregated target state (the
    last index). Target and terminal grid points are absorbing.
    """
    config = config or IntegratorConfig()
    pts = grid_points(config)
    n_grid = pts.shape[0]
    S, A = n_grid + 1, config.num_actions
    agg = n_grid
    x, v = pts[:, 0], pts[:, 1]
    target = np.append(~_inside(config.target_box, x, v), True)
    terminal = np.append(_inside(config.terminal_box, x, v), False)
    absorbing = target | terminal
    (gx0, gx1), (gv0, gv1) = config.grid_box

    rows, cols, vals = [], [], []
    for s in np.flatnonzero(absorbing):
        for a in range(A):
            rows.append(s * A + a)
            cols.append(s)
            vals.append(1.0)
    live = np.flatnonzero(~absorbing[:n_grid])
    xl, vl = x[live], v[live]
    p = config.perturb_prob
    for a, u in enumerate(config.action_levels()):
        branches = [(1.0 - p, u), (p, perturbed(config, u))]
        if branches[0][1] == branches[1][1]:
            branches = [(1.0, u)]
        for prob, accel in branches:
            if prob == 0.0:
                continue
            xn = xl + config.dt * vl
            vn = vl + config.dt * accel
            inside = (gx0 <= xn) & (xn <= gx1) & (gv0 <= vn) & (vn <= gv1)
            out = live[~inside]
            rows.extend((out * A + a).tolist())
            cols.extend([agg] * out.size)
            vals.extend([prob] * out.size)
            src = live[inside]
            for idx, w in _bilinear(config, xn[inside], vn[inside]):
                keep = w > 0
                rows.extend((src[keep] * A + a).tolist())
                cols.extend(idx[keep].tolist())
                vals.extend((prob * w[keep]).tolist())
    P = sp.csr_matrix((vals, (rows, cols)), shape=(S * A, S))
    coords = np.vstack([pts, [np.nan, np.nan]])
    return FiniteMdp(S, A, P, target, terminal, config.gamma,
                     coords=coords, coord_names=("position", "velocity"))


def reset_states(config: IntegratorConfig, mdp: FiniteMdp) -> np.ndarray:
    """Non-absorbing grid states inside the reset box."""
    xy = mdp.coords
    inside = _inside(config.reset_box, xy[:, 0], xy[:, 1])
    inside = np.where(np.isnan(xy[:, 0]), False, inside)
    return np.flatnonzero(inside & ~mdp.absorbing)
