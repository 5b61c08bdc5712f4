import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from safespec.envs import make_task
from safespec.envs.chain import LEFT, RIGHT, ChainWorldConfig, chain_mdp, chain_step
from safespec.envs.integrator import (IntegratorConfig, IntegratorEnv, discretize_integrator,
                                      grid_points, integrator_step, reset_states)
from safespec.mdp import deterministic_policy
from safespec.oracle import optimal_unsafety, solve_policy_unsafety

CFG = IntegratorConfig()


def test_origin_is_terminal_and_fixed():
    res = integrator_step(CFG, np.array([0.0, 0.0]), 0.0, np.random.default_rng(0))
    assert np.array_equal(res.next_state, [0.0, 0.0])
    assert (res.target_hit, res.done) == (0, 1)


def test_outside_box_hits_target():
    for a in (-0.5, 0.0, 0.5):
        assert integrator_step(CFG, np.array([1.5, 0.0]), a, perturb=False).target_hit == 1


def test_euler_arithmetic():
    res = integrator_step(CFG, np.array([0.5, 0.2]), 0.5, perturb=False)
    assert res.next_state == pytest.approx([0.52, 0.25], abs=1e-15)


def test_perturbation_branch():
    res = integrator_step(CFG, np.array([0.5, 0.2]), 0.1, perturb=True)
    assert res.next_state == pytest.approx([0.52, 0.25], abs=1e-15)
    zero = integrator_step(CFG, np.array([0.5, 0.2]), 0.0, perturb=True)
    assert zero.next_state == pytest.approx([0.52, 0.2], abs=1e-15)


def test_action_range():
    with pytest.raises(ValueError):
        integrator_step(CFG, np.array([0.0, 0.1]), 0.6, perturb=False)


def test_config_validation():
    with pytest.raises(ValueError):
        IntegratorConfig(perturb_prob=1.5)
    with pytest.raises(ValueError):
        IntegratorConfig(action_bound=0.0)
    with pytest.raises(ValueError):
        IntegratorConfig(grid=(2, 41))
    with pytest.raises(ValueError):
        ChainWorldConfig(num_states=2)
    with pytest.raises(ValueError):
        ChainWorldConfig(slip_prob=0.5)


def test_action_levels():
    assert CFG.action_levels().tolist() == [-0.5, 0.0, 0.5]


@settings(max_examples=200, deadline=None)
@given(st.floats(-1.3, 1.3), st.floats(-0.7, 0.7), st.floats(-0.5, 0.5), st.booleans())
def test_step_flags_never_both(x, v, a, perturb):
    res = integrator_step(CFG, np.array([x, v]), a, perturb=perturb)
    assert not (res.target_hit and res.done)


def test_time_limit_truncation():
    cfg = IntegratorConfig(time_limit=5)
    env = IntegratorEnv(cfg, seed=0)
    env.reset()
    env.state = np.array([0.5, 0.0])  # stays put under zero action
    flags = [env.step(0.0) for _ in range(5)]
    assert [tr for _, tr in flags] == [False] * 4 + [True]
    assert all(res.done == 0 for res, _ in flags)


def test_reset_avoids_terminal_box():
    env = IntegratorEnv(CFG, seed=1)
    for _ in range(200):
        s = env.reset()
        (x0, x1), (v0, v1) = CFG.reset_box
        assert x0 <= s[0] <= x1 and v0 <= s[1] <= v1


@pytest.fixture(scope="module")
def grid_mdp():
    return discretize_integrator(CFG)


def test_discretized_shape_and_rows(grid_mdp):
    assert grid_mdp.num_states == 41 * 41 + 1
    sums = np.asarray(grid_mdp.transition.sum(axis=1)).ravel()
    assert np.max(np.abs(sums - 1.0)) <= 1e-12
    assert grid_mdp.target[-1]


def test_terminal_cell_absorbing(grid_mdp):
    pts = grid_points(CFG)
    origin = int(np.flatnonzero((pts[:, 0] == 0) & (pts[:, 1] == 0))[0])
    assert grid_mdp.terminal[origin]
    row = grid_mdp.transition[origin * 3:(origin + 1) * 3].toarray()
    assert np.all(row[:, origin] == 1.0)


def test_fast_exit_goes_to_aggregate():
    # high outward velocity: both branches leave the grid box in one step
    cfg = IntegratorConfig(grid_box=((-1.2, 1.2), (-0.6, 0.6)), dt=0.5)
    mdp = discretize_integrator(cfg)
    pts = grid_points(cfg)
    # the non-target grid point closest to (1.0, 0.5)
    cand = np.flatnonzero(~mdp.target[:-1])
    s = cand[np.argmin(np.hypot(pts[cand, 0] - 1.0, pts[cand, 1] - 0.5))]
    x, v = pts[s]
    assert x + 0.5 * v > 1.2
    for a in range(3):
        assert mdp.transition[s * 3 + a, mdp.num_states - 1] == pytest.approx(1.0)


def test_braking_is_safe_without_perturbation():
    cfg = IntegratorConfig(perturb_prob=0.0)
    mdp = discretize_integrator(cfg)
    V = optimal_unsafety(mdp).values
    pts = grid_points(cfg)
    near = np.flatnonzero((np.abs(pts[:, 0]) <= 0.3) & (np.abs(pts[:, 1]) <= 0.06))
    assert np.all(V[near] <= 1e-9)


def test_safe_set_is_nontrivial(grid_mdp):
    V = optimal_unsafety(grid_mdp).values
    live = ~grid_mdp.target
    frac = np.mean(V[live] <= 0.2)
    assert 0.2 < frac < 1.0
    assert reset_states(CFG, grid_mdp).size > 0


def test_chain_steps():
    cfg = ChainWorldConfig(slip_prob=0.0)
    rng = np.random.default_rng(0)
    res = chain_step(cfg, 1, LEFT, rng)
    assert (res.next_state, res.target_hit, res.done) == (0, 0, 1)
    res = chain_step(cfg, 3, RIGHT, rng)
    assert (res.next_state, res.target_hit, res.done) == (4, 0, 0)
    assert chain_step(cfg, 4, RIGHT, rng).target_hit == 1
    with pytest.raises(ValueError):
        chain_step(cfg, 0, LEFT, rng)


def test_chain_always_left_enumerated():
    cfg = ChainWorldConfig(slip_prob=0.1)
    mdp = chain_mdp(cfg)
    V = solve_policy_unsafety(mdp, deterministic_policy([LEFT] * 5, 2))
    # gambler's ruin with p(right)=0.1, absorbing at 0 and 4: closed form
    r = 0.9 / 0.1
    expected = (1 - r ** 2) / (1 - r ** 4)
    assert V[2] == pytest.approx(expected, abs=1e-12)


def test_chain_sampler_matches_model():
    cfg = ChainWorldConfig(slip_prob=0.1)
    rng = np.random.default_rng(5)
    moves = [chain_step(cfg, 2, RIGHT, rng).next_state for _ in range(20000)]
    assert np.mean(np.array(moves) == 1) == pytest.approx(0.1, abs=0.01)


def test_make_task_keys():
    task = make_task({"env": "chain", "slip_prob": 0.2, "time_limit": 50})
    assert task.time_limit == 50 and task.mdp.num_states == 5
    task = make_task({"env": "integrator", "grid": 11, "dt": 0.2})
    assert task.mdp.num_states == 11 * 11 + 1
    with pytest.raises(ValueError):
        make_task({"env": "reacher"})
