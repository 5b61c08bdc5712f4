from __future__ import annotations

import numpy as np


class _Ring:
    def __init__(self, capacity, state_dim, action_dim):
        self.s = np.zeros((capacity, state_dim))
        self.a = np.zeros((capacity, action_dim))
        self.s2 = np.zeros((capacity, state_dim))
        self.done = np.zeros(capacity)
        self.capacity = capacity
        self.size = 0
        self.ptr = 0

    def add(self, s, a, s2, done):
        i = self.ptr
        self.s[i], self.a[i], self.s2[i], self.done[i] = s, a, s2, done
        self.ptr = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)


class ReplayBuffer:
    """Transitions ``(s, a, target_hit, s', done)`` kept in separate safe and
    unsafe partitions so each minibatch can carry a fixed share of target hits."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int):
        self.safe = _Ring(capacity, state_dim, action_dim)
        self.unsafe = _Ring(capacity, state_dim, action_dim)

    def __len__(self) -> int:
        return self.safe.size + self.unsafe.size

    def add(self, s, a, target_hit, s2, done=0) -> None:
        ring = self.unsafe if target_hit else self.safe
        ring.add(s, a, s2, 0 if target_hit else done)

    def sample(self, batch_size: int, unsafe_fraction: float, rng) -> dict:
        """Uniform draws (with replacement) honouring the unsafe quota.

        The quota is met exactly once the unsafe partition holds at least that
        many entries; before that every stored unsafe entry is drawn once.
        """
        quota = int(round(unsafe_fraction * batch_size))
        if self.unsafe.size >= quota:
            u_idx = rng.integers(self.unsafe.size, size=quota)
        else:
            u_idx = np.arange(self.unsafe.size)
        n_safe = batch_size - u_idx.size
        if self.safe.size == 0:
            s_idx = np.zeros(0, dtype=int)
            u_idx = rng.integers(self.unsafe.size, size=batch_size)
        else:
            s_idx = rng.integers(self.safe.size, size=n_safe)
        return {
            "s": np.concatenate([self.safe.s[s_idx], self.unsafe.s[u_idx]]),
            "a": np.concatenate([self.safe.a[s_idx], self.unsafe.a[u_idx]]),
            "s2": np.concatenate([self.safe.s2[s_idx], self.unsafe.s2[u_idx]]),
            "hit": np.concatenate([np.zeros(s_idx.size), np.ones(u_idx.size)]),
            "done": np.concatenate([self.safe.done[s_idx], self.unsafe.done[u_idx]]),
        }
