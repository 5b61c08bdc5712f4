"""One-dimensional chain world.

States ``0 .. n-1`` from left to right. By default the leftmost state is
terminal (safe exit) and the rightmost is the target. Actions: 0 = left,
1 = right; with probability ``slip_prob`` the move is reversed. Moving into a
wall leaves the state unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..mdp import FiniteMdp, StepResult

LEFT, RIGHT = 0, 1


@dataclass(frozen=True)
class ChainWorldConfig:
    num_states: int = 5
    slip_prob: float = 0.1
    leftmost_terminal: bool = True
    rightmost_target: bool = True
    time_limit: int = 1000
    gamma: float = 1.0

    def __post_init__(self):
        if self.num_states < 3:
            raise ValueError("chain needs at least 3 states")
        if not 0.0 <= self.slip_prob < 0.5:
            raise ValueError("slip_prob must lie in [0, 0.5)")

    @property
    def terminal_states(self) -> list[int]:
        return [0] if self.leftmost_terminal else []

    @property
    def target_states(self) -> list[int]:
        return [self.num_states - 1] if self.rightmost_target else []


def _move(config: ChainWorldConfig, state: int, direction: int) -> int:
    nxt = state - 1 if direction == LEFT else state + 1
    return min(max(nxt, 0), config.num_states - 1)


def chain_step(config: ChainWorldConfig, state: int, action: int, rng) -> StepResult:
    """Sample one move from an interior state."""
    if state in config.terminal_states:
        raise ValueError(f"cannot step from terminal state {state}")
    if action not in (LEFT, RIGHT):
        raise ValueError(f"unknown action {action!r}")
    if state in config.target_states:
        return StepResult(state, 1, 0)
    direction = action if rng.random() >= config.slip_prob else 1 - action
    nxt = _move(config, state, direction)
    return StepResult(nxt, 0, int(nxt in config.terminal_states))


def chain_mdp(config: ChainWorldConfig) -> FiniteMdp:
    n = config.num_states
    P = np.zeros((n, 2, n))
    terminal = np.zeros(n, dtype=bool)
    target = np.zeros(n, dtype=bool)
    terminal[config.terminal_states] = True
    target[config.target_states] = True
    for s in range(n):
        for a in (LEFT, RIGHT):
            if terminal[s] or target[s]:
                P[s, a, s] = 1.0
                continue
            P[s, a, _move(config, s, a)] += 1.0 - config.slip_prob
            P[s, a, _move(config, s, 1 - a)] += config.slip_prob
    return FiniteMdp.from_dense(P, target, terminal, config.gamma,
                                coords=np.arange(n, dtype=float)[:, None],
                                coord_names=("position",))
