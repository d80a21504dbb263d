import numpy as np
import pytest

from klctrl import (
    EnumerationCapError,
    Formulation,
    Policy,
    brute_force_policy_search,
    conditional_policy,
    enumerate_trajectories,
    exact_posterior,
    exact_risk_objective,
    initial_value,
    solve_formulation,
    tilt_table,
)
from klctrl.oracle import expected_cost

from conftest import random_problem

M1_V0 = -np.log(0.5 * (1 + np.exp(-1)))


def test_enumeration_row_counts(m1, rng):
    table = enumerate_trajectories(m1, m1.baseline_policy, m1.baseline_kernels)
    assert len(table) == 2  # Dirac start and kernels: one trajectory per action
    full = random_problem(rng, num_states=2, num_actions=2, horizon=2)
    table = enumerate_trajectories(full, full.baseline_policy, full.baseline_kernels)
    assert len(table) == 2 * (2 * 2) ** 2  # p0 x (action, next state) per step
    one = random_problem(rng, num_states=3, num_actions=1, horizon=2, dirac=True)
    p0 = np.zeros(3)
    p0[0] = 1.0
    one = one.replace(initial_distribution=p0)
    table = enumerate_trajectories(one, one.baseline_policy, one.baseline_kernels)
    assert len(table) == 1


def test_exact_risk_objective_on_m1(m1):
    table = enumerate_trajectories(m1, m1.baseline_policy, m1.baseline_kernels)
    seeking = exact_risk_objective(table, 1.0)
    assert seeking == pytest.approx(M1_V0, abs=1e-12)
    averse = exact_risk_objective(table, -1.0)
    assert averse == pytest.approx(np.log(0.5 * np.e + 0.5), abs=1e-12)
    assert averse == pytest.approx(0.620115, abs=1e-6)


def test_expected_cost_on_m1(m1):
    table = enumerate_trajectories(m1, m1.baseline_policy, m1.baseline_kernels)
    assert expected_cost(table) == pytest.approx(0.5, abs=1e-14)


def test_posterior_on_m1(m1):
    post = exact_posterior(m1, m1.baseline_policy, 1.0)
    probs = {tuple(traj.actions): p for traj, p in zip(post.trajectories(), post.probs)}
    assert probs[(0,)] == pytest.approx(0.26894142136999510, abs=1e-12)
    assert probs[(1,)] == pytest.approx(0.7310585786300049, abs=1e-12)


def test_posterior_sharpens_with_lambda(m1):
    post = exact_posterior(m1, m1.baseline_policy, 2.0)
    probs = {tuple(traj.actions): p for traj, p in zip(post.trajectories(), post.probs)}
    assert probs[(1,)] == pytest.approx(1 / (1 + np.exp(-2)), abs=1e-12)
    assert probs[(1,)] == pytest.approx(0.880797, abs=1e-6)


def test_tilt_semigroup(rng):
    problem = random_problem(rng, num_states=3, num_actions=2, horizon=2)
    table = enumerate_trajectories(problem, problem.baseline_policy, problem.baseline_kernels)
    once = tilt_table(tilt_table(table, 0.4), 0.9)
    combined = tilt_table(table, 1.3)
    np.testing.assert_allclose(once.probs, combined.probs, atol=1e-12)


def test_tilt_preserves_normalization(rng):
    problem = random_problem(rng)
    table = enumerate_trajectories(problem, problem.baseline_policy, problem.baseline_kernels)
    for lam in (0.5, -0.5, 3.0):
        assert tilt_table(table, lam).total_probability() == pytest.approx(1.0, abs=1e-9)


def test_conditional_policy_reproduces_posterior_action_marginals(rng):
    for _ in range(10):
        problem = random_problem(rng, lambda_s=1.0)
        post = exact_posterior(problem, problem.baseline_policy, problem.lambda_s)
        cond = conditional_policy(post)
        for t in range(problem.horizon):
            joint = np.zeros((problem.num_states, problem.num_actions))
            np.add.at(joint, (post.states[:, t], post.actions[:, t]), post.probs)
            marg = joint.sum(axis=1)
            for x in range(problem.num_states):
                if marg[x] > 1e-12:
                    np.testing.assert_allclose(
                        cond.table[t, x], joint[x] / marg[x], atol=1e-10
                    )


def test_conditional_policy_unvisited_rows_fall_back_to_baseline(m1):
    post = exact_posterior(m1, m1.baseline_policy, 1.0)
    cond = conditional_policy(post)
    # state 1 is unreachable at t=0
    np.testing.assert_allclose(cond.table[0, 1], m1.baseline_policy.table[0, 1])


def test_brute_force_on_m1(m1):
    policy, value = brute_force_policy_search(m1, "soc")
    assert value == pytest.approx(0.0, abs=1e-14)
    np.testing.assert_allclose(policy.table[0, 0], [0.0, 1.0])


def test_brute_force_rsoc_matches_solver(rng):
    for _ in range(10):
        problem = random_problem(rng, max_states=3, max_actions=2, max_horizon=3)
        _, value = brute_force_policy_search(problem, "rsoc", problem.lambda_s)
        sol = solve_formulation(problem, Formulation.RSOC)
        assert initial_value(problem, sol) == pytest.approx(value, abs=1e-9)


def test_brute_force_soc_matches_solver(rng):
    for _ in range(10):
        problem = random_problem(rng, max_states=3, max_actions=2, max_horizon=3)
        _, value = brute_force_policy_search(problem, "soc")
        sol = solve_formulation(problem, Formulation.SOC)
        assert initial_value(problem, sol) == pytest.approx(value, abs=1e-9)


def test_brute_force_soc_equals_rsoc_on_dirac(rng):
    for _ in range(5):
        problem = random_problem(rng, max_states=3, max_actions=2, max_horizon=3, dirac=True)
        _, v_soc = brute_force_policy_search(problem, "soc")
        for lam in (0.8, -0.8):
            _, v_rsoc = brute_force_policy_search(problem, "rsoc", lam)
            assert v_rsoc == pytest.approx(v_soc, abs=1e-10)


def test_brute_force_returns_a_deterministic_policy(rng):
    problem = random_problem(rng)
    policy, _ = brute_force_policy_search(problem, "soc")
    assert np.all(np.isin(policy.table, (0.0, 1.0)))
    np.testing.assert_allclose(policy.table.sum(axis=-1), 1.0)


def test_enumeration_cap_raises(rng):
    problem = random_problem(rng, num_states=4, num_actions=4, horizon=4)
    with pytest.raises(EnumerationCapError):
        enumerate_trajectories(
            problem, problem.baseline_policy, problem.baseline_kernels, cap=100
        )


def test_policy_sweep_cap_raises(rng):
    problem = random_problem(rng, num_states=4, num_actions=4, horizon=4)
    with pytest.raises(EnumerationCapError):
        brute_force_policy_search(problem, "soc", cap=1000)


def test_posterior_requires_positive_lambda(m1):
    with pytest.raises(ValueError):
        exact_posterior(m1, m1.baseline_policy, -1.0)
