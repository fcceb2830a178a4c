import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from softspibb.competitors import pi_b_spibb
from softspibb.error_bounds import spibb_equivalent_error
from softspibb.mdp import MdpShape, estimate_mle, policy_evaluation_q, policy_value, solve_optimal
from softspibb.soft_spibb import (SoftSpibbConfig, approx_improvement_state, constraint_cost,
                                  exact_improvement_state, measure_improvement_complexity,
                                  run_policy_iteration)

from conftest import random_dataset, random_mdp, random_policy, random_state_instance, simplex_grid

Q = np.array([1.0, 2.0, 3.0, 4.0])
PI_B = np.array([0.1, 0.4, 0.3, 0.2])
ONES = np.ones(4)


def grid_optimum(q, pi_b, e, eps, step):
    grid = simplex_grid(len(q), step)
    cost = np.abs(grid - pi_b) @ e
    feasible = grid[cost <= eps + 1e-12]
    return float(np.max(feasible @ q))


def test_exact_small_budget_example():
    row = exact_improvement_state(Q, PI_B, ONES, 0.6)
    np.testing.assert_allclose(row, [0.0, 0.2, 0.3, 0.5], atol=1e-12)
    assert row @ Q == pytest.approx(3.3, abs=1e-12)
    # grid oracle over the simplex: 0.01 grid hits the optimum exactly here
    assert grid_optimum(Q, PI_B, ONES, 0.6, 0.01) == pytest.approx(3.3, abs=1e-12)


def test_exact_large_budget_is_greedy():
    np.testing.assert_allclose(exact_improvement_state(Q, PI_B, ONES, 10.0), [0, 0, 0, 1], atol=1e-12)


@pytest.mark.parametrize("improve", [exact_improvement_state, approx_improvement_state])
def test_zero_budget_keeps_baseline(improve, rng):
    for _ in range(20):
        q, pi_b, e, _ = random_state_instance(rng)
        np.testing.assert_array_equal(improve(q, pi_b, e, 0.0), pi_b)


@pytest.mark.parametrize("improve", [exact_improvement_state, approx_improvement_state])
def test_constant_q_keeps_baseline(improve):
    np.testing.assert_array_equal(improve(np.ones(4), PI_B, ONES, 1.0), PI_B)


def test_approx_hand_execution():
    # a- = a1: m- = min(0.1, 0.3) = 0.1 -> a4 (gain 3); E = 0.4
    # a- = a2: m- = min(0.4, 0.2) = 0.2 -> a4 (gain 2); E = 0
    row = approx_improvement_state(Q, PI_B, ONES, 0.6)
    np.testing.assert_allclose(row, [0.0, 0.2, 0.3, 0.5], atol=1e-12)
    assert constraint_cost(row, PI_B, ONES) == pytest.approx(0.6, abs=1e-12)
    assert row @ Q <= exact_improvement_state(Q, PI_B, ONES, 0.6) @ Q + 1e-12


@pytest.mark.parametrize("improve", [exact_improvement_state, approx_improvement_state])
def test_spibb_equivalent_table_row(improve):
    e = spibb_equivalent_error([[0, 20, 20, 0]], 10, 2.0).values[0]
    np.testing.assert_allclose(improve(Q, PI_B, e, 2.0), [0.1, 0.0, 0.7, 0.2], atol=1e-12)


def test_zero_error_action_is_unconstrained():
    row = approx_improvement_state(Q, PI_B, [0.0, 0.0, 0.0, 0.0], 0.1)
    np.testing.assert_allclose(row, [0, 0, 0, 1], atol=1e-12)


def test_approx_prefers_gain_per_error():
    # a- = a1: a2 has gain/e 2 vs 0.75 for a3, moves 0.15, E = 0.075
    # a- = a2: m- = 0.075, a+ = a3, m+ = 0.075 / 4
    row = approx_improvement_state([0.0, 1.0, 1.5], [1.0, 0.0, 0.0], [1.0, 0.5, 2.0], 0.3)
    np.testing.assert_allclose(row, [0.85, 0.13125, 0.01875], atol=1e-15)


# -- properties ------------------------------------------------------------------

@settings(max_examples=300, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_constraint_and_dominance(seed):
    rng = np.random.default_rng(seed)
    q, pi_b, e, eps = random_state_instance(rng)
    exact = exact_improvement_state(q, pi_b, e, eps)
    approx = approx_improvement_state(q, pi_b, e, eps)
    for row in (exact, approx):
        assert np.all(row >= 0) and np.all(row <= 1)
        assert abs(row.sum() - 1.0) <= 1e-9
        assert constraint_cost(row, pi_b, e) <= eps + 1e-9
        np.testing.assert_array_equal(row[np.isinf(e)], pi_b[np.isinf(e)])
    assert q @ exact >= q @ approx - 1e-9
    assert q @ approx >= q @ pi_b - 1e-9


def test_exact_matches_grid_for_three_actions(rng):
    for _ in range(10):
        q, pi_b, e, eps = random_state_instance(rng, n_actions=3, sentinel_prob=0.0, zero_prob=0.0)
        exact = exact_improvement_state(q, pi_b, e, eps) @ q
        grid = grid_optimum(q, pi_b, e, eps, 0.005)
        assert grid <= exact + 1e-9
        assert exact - grid <= 2e-2 * (np.ptp(q) + 1e-12)


# -- policy iteration ------------------------------------------------------------

def _instance(rng, S=8, A=3, n=80):
    terminal = np.zeros(S, dtype=bool)
    terminal[-1] = True
    data = random_dataset(rng, S, A, n, terminal)
    mle, counts = estimate_mle(data, MdpShape(S, A, terminal), 0.9, 1.0)
    return mle, counts, random_policy(rng, S, A)


def test_zero_epsilon_returns_baseline(rng):
    mle, counts, pi_b = _instance(rng)
    res = run_policy_iteration(mle, pi_b, np.ones_like(pi_b), SoftSpibbConfig(0.0))
    np.testing.assert_array_equal(res.policy, pi_b)
    np.testing.assert_allclose(res.q, policy_evaluation_q(mle, pi_b), atol=1e-12)
    assert res.iterations_used == 1


@pytest.mark.parametrize("variant", ["exact", "approx"])
def test_vacuous_budget_gives_optimal(variant, rng):
    mle, _, pi_b = _instance(rng)
    e = np.full(pi_b.shape, 0.5)
    res = run_policy_iteration(mle, pi_b, e, SoftSpibbConfig(1.0 + 1e-9, variant))
    pi_star, _ = solve_optimal(mle)
    assert policy_value(mle, res.policy) == pytest.approx(policy_value(mle, pi_star), abs=1e-9)
    assert res.converged


@pytest.mark.parametrize("variant", ["exact", "approx"])
def test_spibb_equivalent_matches_pi_b_spibb(variant, rng):
    for _ in range(5):
        mle, counts, pi_b = _instance(rng)
        e = spibb_equivalent_error(counts, 5, 2.0)
        res = run_policy_iteration(mle, pi_b, e, SoftSpibbConfig(2.0, variant))
        ref = pi_b_spibb(mle, pi_b, counts, 5)
        np.testing.assert_allclose(res.policy, ref, atol=1e-9)


@pytest.mark.parametrize("variant", ["exact", "approx"])
def test_iteration_is_monotone_and_constrained(variant, rng):
    for _ in range(5):
        mle, counts, pi_b = _instance(rng)
        e = 1.0 / np.sqrt(np.maximum(counts, 1))
        e[counts == 0] = np.inf
        eps = float(rng.uniform(0.1, 2.0))
        res = run_policy_iteration(mle, pi_b, e, SoftSpibbConfig(eps, variant))
        assert np.all(np.diff(res.values) >= -1e-9)
        assert len(res.values) == res.iterations_used + 1
        assert np.all(res.per_state_budget_spent <= eps + 1e-9)
        finite = np.isfinite(e).all(axis=1)
        direct = (e[finite] * np.abs(res.policy[finite] - pi_b[finite])).sum(axis=1)
        np.testing.assert_allclose(res.per_state_budget_spent[finite], direct, atol=1e-9)


@pytest.mark.parametrize("variant", ["exact", "approx"])
def test_one_step_is_advantageous(variant, rng):
    for _ in range(5):
        mle, counts, pi_b = _instance(rng)
        e = 1.0 / np.sqrt(np.maximum(counts, 1))
        res = run_policy_iteration(mle, pi_b, e, SoftSpibbConfig(1.0, variant, one_step=True))
        assert res.iterations_used == 1
        q_b = policy_evaluation_q(mle, pi_b)
        advantage = q_b - (pi_b * q_b).sum(axis=1, keepdims=True)
        assert np.all((advantage * res.policy).sum(axis=1) >= -1e-9)


def test_max_iterations_flag(rng):
    mle = random_mdp(rng, 6, 3, gamma=0.99)
    pi_b = random_policy(rng, 6, 3)
    res = run_policy_iteration(mle, pi_b, np.full((6, 3), 0.3),
                               SoftSpibbConfig(0.5, max_iterations=1, stop_tolerance=1e-300))
    assert res.iterations_used == 1 and not res.converged


def test_config_validation():
    with pytest.raises(ValueError):
        SoftSpibbConfig(-0.1)
    with pytest.raises(ValueError):
        SoftSpibbConfig(1.0, variant="other")
    with pytest.raises(ValueError):
        SoftSpibbConfig(1.0, stop_tolerance=0.0)


def test_shape_mismatch_rejected(rng):
    mle, _, pi_b = _instance(rng)
    with pytest.raises(ValueError):
        run_policy_iteration(mle, pi_b, np.ones((2, 2)), SoftSpibbConfig(1.0))


def test_complexity_table_shape():
    rows = measure_improvement_complexity((4, 8, 16), n_states=5, n_instances=1)
    assert [r["n_actions"] for r in rows] == [4, 8, 16]
    assert all(r["approx_seconds"] > 0 and r["exact_seconds"] > 0 for r in rows)
