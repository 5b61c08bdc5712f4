import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import (brute_force_optimal, corpus, hitting_linear_solve, monte_carlo_unsafety,
                     random_mdp, unsafety_linear_solve)
from safespec.envs.chain import LEFT
from safespec.mdp import FiniteMdp, deterministic_policy, uniform_policy
from safespec.oracle import (exact_q_tables, greedy_policy, optimal_unsafety, policy_hitting_time,
                             policy_unsafety, safe_set, solve_hitting_time,
                             solve_policy_unsafety)

S_B, S_C = 1, 2


def test_optimal_boundary_values(chain5):
    V = optimal_unsafety(chain5).values
    assert V[chain5.target].tolist() == [1.0]
    assert V[chain5.terminal].tolist() == [0.0]


def test_chain_optimal_matches_enumeration(chain5):
    V = optimal_unsafety(chain5).values
    assert np.allclose(V, brute_force_optimal(chain5), atol=1e-9)
    assert 0 < V[S_C] < 1


@pytest.mark.parametrize("k", range(0, 30, 3))
def test_corpus_optimal_matches_enumeration(k):
    mdp = corpus()[k]
    assert np.allclose(optimal_unsafety(mdp).values, brute_force_optimal(mdp), atol=1e-9)


def test_always_left_is_safe_without_slip(chain5_det):
    left = deterministic_policy(np.full(5, LEFT), 2)
    assert policy_unsafety(chain5_det, left).values[S_B] == 0.0


def test_uniform_policy_monte_carlo(chain5_det):
    pi = uniform_policy(5, 2)
    exact = policy_unsafety(chain5_det, pi).values[S_B]
    assert exact == pytest.approx(unsafety_linear_solve(chain5_det, pi)[S_B], abs=1e-9)
    p, se = monte_carlo_unsafety(chain5_det, pi, S_B, 100_000, np.random.default_rng(7))
    assert abs(p - exact) < 3 * se


def test_policy_values_dominate_optimal(chain5, rng):
    vstar = optimal_unsafety(chain5).values
    for _ in range(50):
        pi = rng.dirichlet(np.ones(2), size=5)
        assert np.all(policy_unsafety(chain5, pi).values >= vstar - 1e-12)


def test_hitting_time_corridor():
    # 0 -> 1 -> 2 -> 3 (terminal), deterministic
    P = np.zeros((4, 1, 4))
    for s in range(3):
        P[s, 0, s + 1] = 1.0
    P[3, 0, 3] = 1.0
    mdp = FiniteMdp.from_dense(P, [False] * 4, [False, False, False, True], 1.0)
    T = policy_hitting_time(mdp, uniform_policy(4, 1)).times
    assert T.tolist() == [3.0, 2.0, 1.0, 0.0]


def test_hitting_time_chain_linear_solve(chain5):
    left = deterministic_policy(np.full(5, LEFT), 2)
    T = policy_hitting_time(chain5, left).times
    assert T[S_C] == pytest.approx(hitting_linear_solve(chain5, left)[S_C], rel=1e-9)
    assert T[chain5.absorbing].tolist() == [0.0, 0.0]


def test_hitting_time_unbounded_is_inf():
    # state 1 loops forever under gamma = 1
    P = np.zeros((3, 1, 3))
    P[0, 0, 0] = 1.0
    P[1, 0, 1] = 1.0
    P[2, 0, 0] = 1.0
    mdp = FiniteMdp.from_dense(P, [True, False, False], [False, False, False], 1.0)
    pi = uniform_policy(3, 1)
    assert np.isinf(policy_hitting_time(mdp, pi).times[1])
    assert np.isinf(solve_hitting_time(mdp, pi)[1])
    assert solve_policy_unsafety(mdp, pi)[1] == 0.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(3, 12), st.integers(1, 3))
def test_hitting_bounded_by_horizon(seed, S, A):
    rng = np.random.default_rng(seed)
    gamma = float(rng.uniform(0.5, 0.99))
    mdp = random_mdp(rng, S, A, gamma=gamma, n_terminal=int(rng.integers(0, 2)))
    pi = rng.dirichlet(np.ones(A), size=S)
    T = policy_hitting_time(mdp, pi).times
    assert np.all(T <= 1.0 / (1.0 - gamma) + 1e-9)
    assert np.allclose(T, hitting_linear_solve(mdp, pi), rtol=1e-8)
    assert np.allclose(solve_hitting_time(mdp, pi), hitting_linear_solve(mdp, pi), rtol=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(3, 12), st.integers(1, 3))
def test_solvers_agree(seed, S, A):
    rng = np.random.default_rng(seed)
    mdp = random_mdp(rng, S, A, gamma=1.0 if seed % 2 else 0.9, n_terminal=int(rng.integers(0, 3)))
    pi = rng.dirichlet(np.ones(A), size=S)
    ref = unsafety_linear_solve(mdp, pi)
    assert np.allclose(solve_policy_unsafety(mdp, pi), ref, atol=1e-9)
    table = policy_unsafety(mdp, pi)
    assert np.allclose(table.values, ref, atol=1e-8)
    v = table.values
    assert v.min() >= 0 and v.max() <= 1
    vstar = optimal_unsafety(mdp).values
    assert np.all(vstar <= v + 1e-9)


def test_extra_sweep_is_idempotent(chain5):
    tol = 1e-10
    table = optimal_unsafety(chain5, tol=tol)
    assert table.residual < tol
    q = chain5.expected_next(table.values).min(axis=1)
    q[chain5.target], q[chain5.terminal] = 1.0, 0.0
    assert np.max(np.abs(q - table.values)) < tol


def test_tolerance_validation(chain5):
    with pytest.raises(ValueError):
        optimal_unsafety(chain5, tol=0.0)


def test_safe_set_thresholds(chain5):
    V = optimal_unsafety(chain5).values
    assert safe_set(V, 1.0).member.all()
    ties = safe_set(np.array([0.2, 0.2000001, 0.1]), 0.2).member
    assert ties.tolist() == [True, False, True]
    # with slip the only zero-risk state is the terminal one
    zero = safe_set(V, 0.0).member
    assert zero.tolist() == [True, False, False, False, False]


def test_policy_safe_set_inside_optimal(chain5, rng):
    vstar = safe_set(optimal_unsafety(chain5), 0.2)
    for _ in range(20):
        pi = rng.dirichlet(np.ones(2), size=5)
        assert safe_set(policy_unsafety(chain5, pi), 0.2).issubset(vstar)


def test_exact_q_tables(chain5):
    pi = uniform_policy(5, 2)
    q_v, q_t = exact_q_tables(chain5, pi)
    V = unsafety_linear_solve(chain5, pi)
    assert np.allclose((pi * q_v).sum(axis=1), V, atol=1e-12)
    assert np.all(q_v[chain5.target] == 1.0) and np.all(q_t[chain5.absorbing] == 0.0)


def test_greedy_policy_attains_optimum(chain5):
    V = optimal_unsafety(chain5).values
    pi = greedy_policy(chain5, V)
    assert np.allclose(solve_policy_unsafety(chain5, pi), V, atol=1e-9)
