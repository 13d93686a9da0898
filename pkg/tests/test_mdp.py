import json

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_mdps
from stratlink.envs import parse_gridworld
from stratlink.mdp import (
    Environment,
    as_reward,
    check_policy,
    environment_from_json,
    environment_to_json,
    expected_return,
    rollout,
    validate_environment,
)


def test_toy_environment_is_valid(toy):
    env, _, _ = toy
    assert validate_environment(env) == []
    assert env.is_deterministic()


def test_report_names_bad_transition_row():
    tau = np.array([[[1.0, 0.0]], [[0.9, 0.0]]])
    env = Environment(np.array([1.0, 0.0]), sp.csr_matrix(tau.reshape(2, 2)))
    report = validate_environment(env)
    assert len(report) == 1
    assert "state 1, action 0" in report[0] and "0.9" in report[0]


def test_uniform_initial_distribution_is_valid():
    env = Environment.from_successors([0.5, 0.5], np.array([[0], [1]]))
    assert validate_environment(env) == []


def test_validation_does_not_mutate(toy):
    env, _, _ = toy
    before = env.tau.copy()
    validate_environment(env)
    assert np.array_equal(before, env.tau)


def test_bad_initial_distribution_reported():
    env = Environment.from_successors([0.5, 0.4], np.array([[0], [1]]))
    assert any("initial_dist" in p for p in validate_environment(env))


def test_reward_rejects_nan_and_plus_inf():
    with pytest.raises(ValueError):
        as_reward([[0.0, float("nan")]])
    with pytest.raises(ValueError):
        as_reward([[0.0, float("inf")]])
    r = as_reward([[0.0, float("-inf")]])
    assert np.isneginf(r[0, 1])


def test_corridor_rollout_goes_right_twice():
    world = parse_gridworld("S.T")
    right = np.zeros((world.env.state_count, 4))
    right[:, 3] = 1.0
    traj = rollout(world.env, right, 2, seed=0)
    start = world.layout.state((0, 0))
    mid = world.layout.state((0, 1))
    assert traj.decisions == [(start, 3), (mid, 3)]


def test_toy_rollout_takes_a2_twice(toy):
    env, _, _ = toy
    pol = np.array([[0.0, 1.0], [0.0, 1.0]])
    assert rollout(env, pol, 2, seed=3).decisions == [(0, 1), (1, 1)]


def test_rollout_is_seeded(toy):
    env, _, _ = toy
    pol = np.full((2, 2), 0.5)
    assert rollout(env, pol, 20, seed=7) == rollout(env, pol, 20, seed=7)


def test_rollout_rejects_zero_horizon(toy):
    env, _, _ = toy
    with pytest.raises(ValueError):
        rollout(env, np.full((2, 2), 0.5), 0, seed=0)


def test_expected_return_toy_values(toy):
    env, r_alpha, r_beta = toy
    always_a1 = np.array([[1.0, 0.0], [1.0, 0.0]])
    assert expected_return(env, always_a1, r_alpha, 1.0, 2) == pytest.approx(2.0)
    a2_then_a1 = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert expected_return(env, a2_then_a1, r_beta, 1.0, 2) == pytest.approx(2.5)


def test_expected_return_zero_reward(toy):
    env, _, _ = toy
    assert expected_return(env, np.full((2, 2), 0.5), np.zeros((2, 2)), 0.9, 10) == 0.0


def test_expected_return_hits_forbidden_entry(toy):
    env, r_alpha, _ = toy
    masked = np.array(r_alpha)
    masked[1, 1] = -np.inf
    pol = np.array([[0.0, 1.0], [0.0, 1.0]])
    assert expected_return(env, pol, masked, 1.0, 2) == -np.inf


def test_policy_check_rejects_bad_rows():
    with pytest.raises(ValueError):
        check_policy(np.array([[0.5, 0.6]]))


def test_json_round_trip(toy):
    env, r_alpha, _ = toy
    masked = np.array(r_alpha)
    masked[1, 0] = -np.inf
    doc = json.loads(json.dumps(environment_to_json(env, masked)))
    assert doc["reward"][1][0] == "-inf"
    env2, r2 = environment_from_json(doc)
    assert np.array_equal(env2.tau, env.tau)
    assert np.array_equal(r2, masked)
    assert env2.state_labels == ("S1", "S2")


@given(random_mdps(), st.integers(1, 12), st.integers(0, 1000))
def test_rollout_follows_transition_support(mdp, horizon, seed):
    env, _, tau = mdp
    rng = np.random.default_rng(seed)
    pol = rng.random((env.state_count, env.action_count))
    pol /= pol.sum(axis=1, keepdims=True)
    traj = rollout(env, pol, horizon, seed)
    assert len(traj) == horizon
    chain = list(traj.states) + [traj.final_state]
    for t, a in enumerate(traj.actions):
        assert tau[chain[t]][a][chain[t + 1]] > 0


@given(random_mdps(), st.integers(0, 1000))
def test_expected_return_is_linear(mdp, seed):
    env, r1, _ = mdp
    rng = np.random.default_rng(seed)
    r2 = rng.normal(size=r1.shape)
    pol = rng.random(r1.shape)
    pol /= pol.sum(axis=1, keepdims=True)
    lhs = expected_return(env, pol, r1 + r2, 0.9, 5)
    rhs = expected_return(env, pol, r1, 0.9, 5) + expected_return(env, pol, r2, 0.9, 5)
    assert lhs == pytest.approx(rhs, abs=1e-9)


@given(random_mdps())
def test_one_step_return_is_sigma_weighted_reward(mdp):
    env, r, _ = mdp
    pol = np.full(r.shape, 1.0 / r.shape[1])
    direct = float(env.initial_dist @ (pol * r).sum(axis=1))
    assert expected_return(env, pol, r, 0.5, 1) == pytest.approx(direct, abs=1e-12)
