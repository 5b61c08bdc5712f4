"""Compiled inner loop for tabular data collection.

Falls back to plain Python when numba is unavailable; results are identical,
only slower.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


@njit(cache=True)
def _pick(cum, lo, hi, u):
    for j in range(lo, hi - 1):
        if u < cum[j]:
            return j
    return hi - 1


@njit(cache=True)
def collect(n_steps, indptr, indices, cum, is_target, is_terminal, reset_states,
            time_limit, gamma, behavior_cum, eval_pi, q_v, q_t, visits,
            lr_exponent, uniforms, state, t, outcomes):
    """Run ``n_steps`` environment steps with in-place Q updates.

    ``uniforms`` is an ``(n_steps, 3)`` block of U[0,1) draws used for the
    action, the successor and the reset state. Returns the final
    ``(state, t, n_outcomes)``; ``outcomes[:n_outcomes]`` holds one flag per
    finished episode (1 = safe).
    """
    A = q_v.shape[1]
    n_out = 0
    for k in range(n_steps):
        s = state
        a = _pick(behavior_cum[s], 0, A, uniforms[k, 0])
        if is_target[s]:
            for b in range(A):
                q_v[s, b] = 1.0
                q_t[s, b] = 0.0
            visits[s, a] += 1
            outcomes[n_out] = 0
            n_out += 1
            state = reset_states[int(uniforms[k, 2] * reset_states.shape[0])]
            t = 0
            continue
        row = s * A + a
        s2 = indices[_pick(cum, indptr[row], indptr[row + 1], uniforms[k, 1])]
        tau = 1.0 / (1.0 + visits[s, a]) ** lr_exponent
        visits[s, a] += 1
        nv = 0.0
        nt = 0.0
        if is_terminal[s2]:
            for b in range(A):
                q_v[s2, b] = 0.0
                q_t[s2, b] = 0.0
        else:
            for b in range(A):
                nv += eval_pi[s2, b] * q_v[s2, b]
                nt += eval_pi[s2, b] * q_t[s2, b]
        q_v[s, a] = (1.0 - tau) * q_v[s, a] + tau * gamma * nv
        q_t[s, a] = (1.0 - tau) * q_t[s, a] + tau * (1.0 + gamma * nt)
        t += 1
        if is_terminal[s2] or t >= time_limit:
            outcomes[n_out] = 1
            n_out += 1
            state = reset_states[int(uniforms[k, 2] * reset_states.shape[0])]
            t = 0
        else:
            state = s2
    return state, t, n_out


def row_cumsum(indptr: np.ndarray, data: np.ndarray) -> np.ndarray:
    """Per-row cumulative sums of CSR data, last entry of each row pinned to 1."""
    cum = np.empty_like(data)
    for r in range(indptr.size - 1):
        lo, hi = indptr[r], indptr[r + 1]
        if hi > lo:
            cum[lo:hi] = np.cumsum(data[lo:hi])
            cum[hi - 1] = 1.0
    return cum
