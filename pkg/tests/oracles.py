"""Independent reference implementations used only by the tests.

Nothing here imports the package's solvers: values come from dense linear
algebra, brute-force enumeration, Monte Carlo or a textbook simplex method.
"""

from __future__ import annotations

import itertools

import numpy as np

from safespec.mdp import FiniteMdp


def dense(mdp: FiniteMdp) -> np.ndarray:
    """``(S, A, S)`` transition tensor."""
    return mdp.transition.toarray().reshape(mdp.num_states, mdp.num_actions, mdp.num_states)


def _can_reach(M: np.ndarray, goal: np.ndarray) -> np.ndarray:
    reach = goal.copy()
    while True:
        new = reach | (M[:, reach].sum(axis=1) > 0)
        if np.array_equal(new, reach):
            return reach
        reach = new


def unsafety_linear_solve(mdp: FiniteMdp, policy) -> np.ndarray:
    """``P_reach`` of a stationary policy by a dense linear solve.

    States that cannot reach the target have value 0. On the remaining
    non-absorbing states the restricted chain leaks mass every step, so the
    linear system is nonsingular even for ``gamma = 1``.
    """
    P = dense(mdp)
    M = np.einsum("sa,sat->st", np.asarray(policy, dtype=float), P)
    target, term = mdp.target, mdp.terminal
    live = ~(target | term)
    graph = M.copy()
    graph[target | term] = 0.0
    R = _can_reach(graph > 0, target) & live
    V = np.zeros(mdp.num_states)
    V[target] = 1.0
    if R.any():
        idx = np.flatnonzero(R)
        A = np.eye(idx.size) - mdp.gamma * M[np.ix_(idx, idx)]
        b = mdp.gamma * M[np.ix_(idx, np.flatnonzero(target))].sum(axis=1)
        V[idx] = np.linalg.solve(A, b)
    return V


def hitting_linear_solve(mdp: FiniteMdp, policy) -> np.ndarray:
    """Discounted expected steps to the absorbing set; inf where unbounded (gamma = 1)."""
    P = dense(mdp)
    M = np.einsum("sa,sat->st", np.asarray(policy, dtype=float), P)
    absorbing = mdp.target | mdp.terminal
    live = np.flatnonzero(~absorbing)
    T = np.zeros(mdp.num_states)
    if live.size == 0:
        return T
    if mdp.gamma < 1.0:
        A = np.eye(live.size) - mdp.gamma * M[np.ix_(live, live)]
        T[live] = np.linalg.solve(A, np.ones(live.size))
        return T
    graph = M.copy()
    graph[absorbing] = 0.0
    reach = _can_reach(graph > 0, absorbing)
    # a state is finite only if every state it can visit also reaches the absorbing set
    bad = ~reach & ~absorbing
    finite = ~_can_reach(graph > 0, bad) & ~absorbing
    idx = np.flatnonzero(finite)
    T[~finite & ~absorbing] = np.inf
    if idx.size:
        A = np.eye(idx.size) - M[np.ix_(idx, idx)]
        T[idx] = np.linalg.solve(A, np.ones(idx.size))
    return T


def brute_force_optimal(mdp: FiniteMdp) -> np.ndarray:
    """Pointwise minimum of ``P_reach`` over every deterministic Markov policy."""
    S, A = mdp.num_states, mdp.num_actions
    live = np.flatnonzero(~(mdp.target | mdp.terminal))
    best = np.full(S, np.inf)
    for choice in itertools.product(range(A), repeat=live.size):
        actions = np.zeros(S, dtype=int)
        actions[live] = choice
        pi = np.eye(A)[actions]
        best = np.minimum(best, unsafety_linear_solve(mdp, pi))
    return best


def random_mdp(rng, num_states: int, num_actions: int, gamma: float = 1.0,
               n_target: int = 1, n_terminal: int = 1, density: float = 0.5) -> FiniteMdp:
    """Random sparse MDP; the first states are targets, the next are terminal."""
    S, A = num_states, num_actions
    P = np.zeros((S, A, S))
    target = np.zeros(S, dtype=bool)
    terminal = np.zeros(S, dtype=bool)
    target[:n_target] = True
    terminal[n_target:n_target + n_terminal] = True
    for s in range(S):
        for a in range(A):
            if target[s] or terminal[s]:
                P[s, a, s] = 1.0
                continue
            mask = rng.random(S) < density
            mask[rng.integers(S)] = True
            w = rng.random(S) * mask
            P[s, a] = w / w.sum()
    return FiniteMdp.from_dense(P, target, terminal, gamma)


def corpus(seed: int = 2024):
    """Small MDPs (at most 12 states, 3 actions) for exhaustive checks."""
    rng = np.random.default_rng(seed)
    mdps = []
    for k in range(30):
        S = int(rng.integers(3, 13))
        A = int(rng.integers(1, 4))
        # keep enumeration cheap: A ** (live states) policies
        while A ** S > 60_000 and A > 1:
            A -= 1
        gamma = 1.0 if k % 3 else float(rng.uniform(0.8, 0.999))
        n_target = int(rng.integers(1, 3))
        n_terminal = int(rng.integers(0, 3))
        mdps.append(random_mdp(rng, S, A, gamma, n_target, n_terminal,
                               density=float(rng.uniform(0.15, 0.7))))
    return mdps


def monte_carlo_unsafety(mdp: FiniteMdp, policy, start: int, n: int, rng,
                         max_steps: int = 10_000) -> tuple[float, float]:
    """Fraction of rollouts that reach the target (mean, standard error).

    Only meaningful for ``gamma = 1``.
    """
    P = dense(mdp)
    pi = np.asarray(policy, dtype=float)
    state = np.full(n, start)
    alive = np.ones(n, dtype=bool)
    hit = np.zeros(n, dtype=bool)
    for _ in range(max_steps):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        s = state[idx]
        in_t = mdp.target[s]
        hit[idx[in_t]] = True
        stop = in_t | mdp.terminal[s]
        alive[idx[stop]] = False
        idx, s = idx[~stop], s[~stop]
        a = (rng.random(idx.size)[:, None] > np.cumsum(pi[s], axis=1)).sum(axis=1)
        a = np.minimum(a, mdp.num_actions - 1)
        probs = P[s, a]
        nxt = (rng.random(idx.size)[:, None] > np.cumsum(probs, axis=1)).sum(axis=1)
        state[idx] = np.minimum(nxt, mdp.num_states - 1)
    p = hit.mean()
    return float(p), float(np.sqrt(p * (1 - p) / n))


# -- textbook two-phase simplex (Bland's rule) --------------------------------

def tableau_simplex(c, A_eq, b_eq, A_ub=None, b_ub=None, tol=1e-12):
    """Minimise ``c x`` s.t. ``A_eq x = b_eq``, ``A_ub x <= b_ub``, ``x >= 0``.

    Dense two-phase tableau with Bland's anti-cycling rule. Returns
    ``(x, value)`` or raises ``ValueError`` if infeasible.
    """
    c = np.asarray(c, dtype=float)
    n = c.size
    rows, rhs = [], []
    n_slack = 0 if A_ub is None else len(b_ub)
    if A_ub is not None:
        for i, (r, b) in enumerate(zip(np.atleast_2d(A_ub), b_ub)):
            slack = np.zeros(n_slack)
            slack[i] = 1.0
            rows.append(np.concatenate([r, slack]))
            rhs.append(b)
    for r, b in zip(np.atleast_2d(A_eq), b_eq):
        rows.append(np.concatenate([r, np.zeros(n_slack)]))
        rhs.append(b)
    M = np.array(rows, dtype=float)
    rhs = np.array(rhs, dtype=float)
    neg = rhs < 0
    M[neg] *= -1
    rhs[neg] *= -1
    m, nv = M.shape
    # phase one: artificial variables on every row
    T = np.zeros((m + 1, nv + m + 1))
    T[:m, :nv] = M
    T[:m, nv:nv + m] = np.eye(m)
    T[:m, -1] = rhs
    basis = list(range(nv, nv + m))
    T[m, :] = -T[:m, :].sum(axis=0)
    T[m, nv:nv + m] = 0.0
    _pivot_loop(T, basis, nv + m, tol)
    if T[m, -1] < -1e-9:
        raise ValueError("infeasible")
    # drive artificial variables out of the basis where possible
    for i, bvar in enumerate(basis):
        if bvar >= nv:
            for j in range(nv):
                if abs(T[i, j]) > tol:
                    _pivot(T, basis, i, j)
                    break
    T2 = np.zeros((m + 1, nv + 1))
    T2[:m, :nv] = T[:m, :nv]
    T2[:m, -1] = T[:m, -1]
    cost = np.concatenate([c, np.zeros(n_slack)])
    T2[m, :nv] = cost
    for i, bvar in enumerate(basis):
        if bvar < nv:
            T2[m, :] -= cost[bvar] * T2[i, :]
    keep = [i for i, bvar in enumerate(basis) if bvar < nv]
    T2 = np.vstack([T2[keep], T2[m:]])
    basis = [basis[i] for i in keep]
    _pivot_loop(T2, basis, nv, tol)
    x = np.zeros(nv)
    for i, bvar in enumerate(basis):
        x[bvar] = T2[i, -1]
    return x[:n], float(c @ x[:n])


def _pivot(T, basis, r, col):
    T[r] /= T[r, col]
    for i in range(T.shape[0]):
        if i != r and T[i, col] != 0.0:
            T[i] -= T[i, col] * T[r]
    basis[r] = col


def _pivot_loop(T, basis, ncols, tol):
    m = T.shape[0] - 1
    while True:
        enter = next((j for j in range(ncols) if T[m, j] < -tol), None)
        if enter is None:
            return
        ratios = [(T[i, -1] / T[i, enter], basis[i], i) for i in range(m) if T[i, enter] > tol]
        if not ratios:
            raise ValueError("unbounded")
        _, _, r = min(ratios)
        _pivot(T, basis, r, enter)


def reference_policy_lp(objective, coeffs, budget, maximize=False):
    """Optimal value of the simplex-plus-one-inequality LP via the tableau method."""
    c = -np.asarray(objective, dtype=float) if maximize else np.asarray(objective, dtype=float)
    n = c.size
    x, val = tableau_simplex(c, np.ones((1, n)), [1.0], np.asarray(coeffs, dtype=float)[None, :],
                             [float(budget)])
    return x, (-val if maximize else val)
