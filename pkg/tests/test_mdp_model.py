#!/usr/bin/env python

"""Tests for the problem model."""

import itertools
import json

import numpy as np
import pytest

from switchq.exceptions import (
    InvalidProblemFile,
    InvariantViolation,
    RankDeficientFeatures,
    SamplingNotPositive,
    ZeroMassStateAction,
)
from switchq.mdp_model import (
    DeterministicPolicy,
    Problem,
    StochasticPolicy,
    dump_problem,
    enumerate_policies,
    expected_reward,
    feature_radius,
    load_problem,
    markov_problem,
    policy_count,
    policy_selector_matrix,
    stationary_distribution,
)
from switchq.switching import hull_weights
from tests.conftest import random_problem

ELQ_DOC = {
    "n_states": 2,
    "n_actions": 1,
    "transition": [[[0.0, 1.0]], [[0.0, 1.0]]],
    "reward": 0.0,
    "gamma": 0.9,
    "alpha": 0.1,
    "features": [[1.0], [-10.0]],
    "sampling": [0.99, 0.01],
}


def test_load_problem_from_json_text():
    p = load_problem(json.dumps(ELQ_DOC))
    assert (p.n_states, p.n_actions, p.m) == (2, 1, 1)
    np.testing.assert_array_equal(p.P, [[0.0, 1.0], [0.0, 1.0]])
    np.testing.assert_array_equal(p.reward, np.zeros((2, 2)))


def test_arrays_are_read_only(elq):
    with pytest.raises(ValueError):
        elq.features[0, 0] = 3.0


def test_zero_sampling_rejected():
    doc = dict(ELQ_DOC, sampling=[1.0, 0.0])
    with pytest.raises(SamplingNotPositive) as info:
        load_problem(json.dumps(doc))
    assert "not strictly positive" in str(info.value)
    assert info.value.exit_code == 2


def test_identical_feature_columns_rejected():
    doc = dict(ELQ_DOC, features=[[1.0, 1.0], [-10.0, -10.0]])
    with pytest.raises(RankDeficientFeatures) as info:
        load_problem(json.dumps(doc))
    assert "rank deficient" in str(info.value)


def test_bad_transition_row_names_the_pair():
    doc = dict(ELQ_DOC, transition=[[[0.5, 0.4]], [[0.0, 1.0]]])
    with pytest.raises(InvariantViolation) as info:
        load_problem(json.dumps(doc))
    assert "transition[0][0]" in str(info.value)


def test_gamma_outside_unit_interval_rejected(elq):
    with pytest.raises(InvariantViolation):
        elq.replace(gamma=1.0)


def test_missing_field_and_missing_file(tmp_path):
    doc = {k: v for k, v in ELQ_DOC.items() if k != "features"}
    with pytest.raises(InvalidProblemFile):
        load_problem(json.dumps(doc))
    with pytest.raises(InvalidProblemFile):
        load_problem(tmp_path / "nope.json")


def test_dump_and_load_keep_the_tensor_layout(tmp_path):
    p = random_problem(3, S=3, A=2, m=2)
    path = dump_problem(p, tmp_path / "p.json")
    doc = json.loads(path.read_text())
    # transition[s][a] is the row of pair (s, a)
    row = p.P[p.pair_index(2, 1)]
    np.testing.assert_allclose(doc["transition"][2][1], row)
    again = load_problem(path)
    np.testing.assert_array_equal(again.transition, p.transition)
    np.testing.assert_array_equal(again.reward, p.reward)


def test_pair_indexing_is_action_block_ordered(example3d):
    assert example3d.pair_index(2, 1) == 5
    assert example3d.pair_of(4) == (1, 1)


def test_expected_reward_zero(jsr_gt1):
    summary = expected_reward(jsr_gt1)
    np.testing.assert_array_equal(summary.R, np.zeros(2))
    assert summary.R_max == 0.0


def test_expected_reward_constant():
    p = Problem(
        n_states=2,
        n_actions=1,
        transition=[[0.0, 1.0], [1.0, 0.0]],
        reward=2.5,
        gamma=0.5,
        alpha=0.5,
        features=[[1.0], [2.0]],
        sampling=[0.5, 0.5],
    )
    np.testing.assert_allclose(expected_reward(p).R, [2.5, 2.5])


def test_expected_reward_matches_summation():
    p = random_problem(11)
    R = expected_reward(p).R
    for i in range(p.n_pairs):
        direct = sum(
            p.P[i, s] * p.reward[i, s] for s in range(p.n_states)
        )
        assert R[i] == pytest.approx(direct, abs=1e-14)


def test_policy_counts(example3d, elq):
    assert policy_count(example3d) == 8
    assert len(enumerate_policies(example3d)) == 8
    assert len(enumerate_policies(elq)) == 1


def test_policy_enumeration_matches_cartesian_product():
    p = random_problem(5, S=2, A=3, m=2)
    pols = enumerate_policies(p)
    expected = list(itertools.product(range(3), repeat=2))
    assert [pol.actions for pol in pols] == expected
    assert pols[5].label() == "23"


def test_selector_for_one_hot_and_uniform_policies():
    pol = DeterministicPolicy((1,), 2)
    np.testing.assert_array_equal(policy_selector_matrix(pol), [[0.0, 1.0]])
    mu = StochasticPolicy([[0.5, 0.5]])
    np.testing.assert_array_equal(policy_selector_matrix(mu), [[0.5, 0.5]])


def test_selector_averages_features():
    p = random_problem(8, S=2, A=2, m=3)
    mu = StochasticPolicy([[0.3, 0.7], [0.9, 0.1]])
    got = policy_selector_matrix(mu) @ p.features
    for s in range(2):
        direct = sum(
            mu.rows[s, a] * p.features[p.pair_index(s, a)] for a in range(2)
        )
        np.testing.assert_allclose(got[s], direct, atol=1e-14)


def test_deterministic_index_follows_enumeration(example3d):
    for i, pol in enumerate(enumerate_policies(example3d)):
        assert StochasticPolicy(pol.rows).deterministic_index() == i
    mixed = StochasticPolicy([[0.5, 0.5], [1.0, 0.0], [0.0, 1.0]])
    assert mixed.deterministic_index() is None


def test_stationary_of_single_state_chain(trajectory_example):
    model = stationary_distribution(trajectory_example, [[0.9, 0.1]])
    np.testing.assert_allclose(model.stationary, [0.9, 0.1], atol=1e-12)


def test_absorbing_chain_starves_a_pair(elq):
    with pytest.raises(ZeroMassStateAction):
        stationary_distribution(elq)


def test_stationary_matches_power_iteration():
    p = random_problem(21)
    model = stationary_distribution(p)
    d = np.full(p.n_pairs, 1.0 / p.n_pairs)
    for _ in range(2000):
        d = d @ model.kernel
    np.testing.assert_allclose(model.stationary, d, atol=1e-10)
    assert model.stationary.sum() == pytest.approx(1.0)


def test_markov_problem_swaps_sampling():
    p = random_problem(22)
    model = stationary_distribution(p)
    q = markov_problem(p, model)
    np.testing.assert_array_equal(q.sampling, model.stationary)
    np.testing.assert_array_equal(q.behavior, model.behavior)


def test_feature_radius(elq, example3d):
    assert feature_radius(elq).phi_max == pytest.approx(10.0)
    identity = Problem(
        n_states=2,
        n_actions=1,
        transition=[[1.0, 0.0], [0.0, 1.0]],
        reward=0.0,
        gamma=0.5,
        alpha=0.5,
        features=np.eye(2),
        sampling=[0.5, 0.5],
    )
    assert feature_radius(identity).phi_max == pytest.approx(1.0)
    rows = np.sqrt(np.sum(example3d.features**2, axis=1))
    assert feature_radius(example3d).phi_max == pytest.approx(rows.max())


def test_stochastic_selector_is_the_hull_of_deterministic_selectors(rng):
    p = random_problem(18, S=3, A=3, m=2)
    pols = enumerate_policies(p)
    selectors = np.stack([policy_selector_matrix(pol) for pol in pols])
    for _ in range(100):
        mu = StochasticPolicy(rng.dirichlet(np.ones(3), size=3))
        weights = hull_weights(mu)
        assert weights.sum() == pytest.approx(1.0)
        assert np.all(weights >= 0.0)
        np.testing.assert_allclose(
            np.tensordot(weights, selectors, 1),
            policy_selector_matrix(mu),
            atol=1e-14,
        )
