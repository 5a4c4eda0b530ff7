#!/usr/bin/env python

"""Tests for deterministic, i.i.d. and Markovian runs."""

import numpy as np
import pytest

from switchq.bellman import coordinate_bias, td_errors
from switchq.certificates import bound_inputs, markov_envelope
from switchq.exceptions import InvalidOverride
from switchq.lyapunov import build_cert, lyap_norm
from switchq.mdp_model import (
    Problem,
    markov_problem,
    policy_selector_matrix,
    stationary_distribution,
)
from switchq.rng import RngSpec, sample_index
from switchq.simulate import (
    normalize_kind,
    run_deterministic,
    run_ensemble,
    run_iid,
    run_markov,
    step_markov,
)
from switchq.switching import build_family, linearize_max
from tests.conftest import random_problem


def _single_pair(alpha=0.5):
    return Problem(
        n_states=1,
        n_actions=1,
        transition=[[1.0]],
        reward=1.0,
        gamma=0.5,
        alpha=alpha,
        features=[[1.0]],
        sampling=[1.0],
    )


def test_kind_aliases():
    assert normalize_kind("det") == "deterministic"
    with pytest.raises(InvalidOverride):
        normalize_kind("sarsa")


def test_trajectory_table(trajectory_example):
    traj = run_deterministic(trajectory_example, [-2.0], 3, [0.0])
    np.testing.assert_allclose(
        traj.thetas.ravel(), [-2.0, 1.6, 0.232, 0.03364], atol=1e-12
    )
    assert traj.mode_indices() == [1, 0, 0]
    np.testing.assert_allclose(traj.errors, [2.0, 1.6, 0.232, 0.03364])


def test_large_jsr_example_still_converges(jsr_gt1):
    traj = run_deterministic(jsr_gt1, [-2.0], 40, [0.0])
    assert traj.thetas[1, 0] == pytest.approx(2.608)
    assert traj.thetas[2, 0] == pytest.approx(0.397 * 2.608)
    assert abs(traj.thetas[-1, 0]) < 1e-12
    assert traj.status == "completed"


def test_fixed_point_is_constant(fixed_point3d):
    p, theta_star = fixed_point3d
    traj = run_deterministic(p, theta_star, 5, theta_star)
    np.testing.assert_allclose(
        traj.thetas, np.tile(theta_star, (6, 1)), atol=1e-12
    )


def test_divergent_run_is_a_status(pqvi):
    traj = run_deterministic(pqvi, [1.0], 50)
    assert traj.status == "diverged"
    assert traj.diverged_at == 21
    assert traj.thetas.shape[0] == 22


def test_iid_noise_vanishes_without_randomness():
    traj = run_iid(_single_pair(), [0.0], 20, RngSpec(3))
    np.testing.assert_allclose(traj.noise_w, 0.0, atol=1e-12)
    assert traj.samples.shape == (20, 2)


def test_iid_replay_is_bit_identical(example3d):
    first = run_iid(example3d, np.ones(3), 300, RngSpec(42, stream=2))
    again = run_iid(example3d, np.ones(3), 300, RngSpec(42, stream=2))
    other = run_iid(example3d, np.ones(3), 300, RngSpec(42, stream=3))
    assert first.thetas.tobytes() == again.thetas.tobytes()
    assert not np.array_equal(first.samples, other.samples)


def test_iid_records_modes_against_fixed_point(fixed_point3d):
    p, theta_star = fixed_point3d
    traj = run_iid(p, np.zeros(3), 50, RngSpec(1), theta_star)
    assert len(traj.modes) == 50
    assert traj.errors.shape == (51,)


def test_rng_streams_are_counter_based():
    spec = RngSpec(9)
    np.testing.assert_array_equal(spec.uniforms(5, 4), spec.uniforms(5, 4))
    assert spec.uniforms(5, 1)[0] != spec.uniforms(6, 1)[0]
    assert spec.for_run(4).stream == 4
    with pytest.raises(InvalidOverride):
        RngSpec(1, algorithm="mt19937")


def test_inverse_cdf_sampling():
    probs = np.array([0.0, 0.25, 0.0, 0.75])
    assert sample_index(probs, 0.0) == 1
    assert sample_index(probs, 0.24) == 1
    assert sample_index(probs, 0.25) == 3
    assert sample_index(probs, 0.999999) == 3


def test_single_pair_has_no_bias():
    p = _single_pair()
    model = stationary_distribution(p)
    out = step_markov(p, model, 0, np.array([0.3]), RngSpec(0).generator(0))
    np.testing.assert_array_equal(out.bias, [0.0])


def test_bias_decomposition(rng):
    p = random_problem(31)
    theta_star = rng.standard_normal(p.m)
    delta_star = td_errors(p, theta_star)
    for _ in range(20):
        theta = rng.standard_normal(p.m)
        x = theta - theta_star
        mu = linearize_max(p, theta, theta_star)
        inner = delta_star + (
            p.gamma * p.transition @ policy_selector_matrix(mu)
            - np.eye(p.n_pairs)
        ) @ (p.features @ x)
        for X in range(p.n_pairs):
            expected = p.features[X] * inner[X] - p.projection.K @ inner
            np.testing.assert_allclose(
                coordinate_bias(p, theta, X), expected, atol=1e-12
            )


def test_markov_run(example3d):
    model = stationary_distribution(example3d)
    p = markov_problem(example3d, model)
    traj = run_markov(p, model, np.ones(3), 100, RngSpec(5), np.zeros(3))
    assert traj.states.shape == (101,)
    assert traj.xi.shape == (100, 3) and traj.bias_b.shape == (100, 3)
    assert len(traj.modes) == 100
    again = run_markov(p, model, np.ones(3), 100, RngSpec(5), np.zeros(3))
    assert traj.thetas.tobytes() == again.thetas.tobytes()


def test_markov_initial_distribution(example3d):
    model = stationary_distribution(example3d)
    p = markov_problem(example3d, model)
    start = np.zeros(6)
    start[4] = 1.0
    traj = run_markov(p, model, np.ones(3), 5, RngSpec(0), initial=start)
    assert traj.states[0] == 4


def test_deterministic_ensemble_runs_agree(example3d):
    summary = run_ensemble(
        example3d, "det", 3, 10, 0, theta0=np.ones(3), theta_star=np.zeros(3)
    )
    assert np.all(summary.final_thetas == summary.final_thetas[0])
    np.testing.assert_array_equal(summary.std_err, 0.0)
    assert summary.diverged == 0


def test_ensemble_without_certificate_has_no_errors(jsr_gt1):
    summary = run_ensemble(jsr_gt1, "iid", 2, 10, 0, theta0=[-2.0])
    assert summary.mean_err is None
    assert summary.envelope is None
    assert summary.dominated() is None


def test_threaded_ensemble_matches_serial(example3d):
    kwargs = dict(theta0=np.ones(3), theta_star=np.zeros(3))
    serial = run_ensemble(example3d, "iid", 4, 20, 7, **kwargs)
    threaded = run_ensemble(example3d, "iid", 4, 20, 7, workers=3, **kwargs)
    np.testing.assert_array_equal(serial.final_thetas, threaded.final_thetas)


@pytest.mark.slow
def test_iid_mean_error_below_envelope(example3d, cert3d):
    summary = run_ensemble(
        example3d, "iid", 2000, 30, 11, cert=cert3d, theta0=np.ones(3)
    )
    np.testing.assert_allclose(summary.theta_star, 0.0, atol=1e-10)
    assert summary.envelope is not None
    assert summary.dominated()


@pytest.mark.slow
def test_markov_ensemble_with_uniform_behavior(example3d):
    summary = run_ensemble(
        example3d,
        "markov",
        50,
        50,
        3,
        theta0=np.ones(3),
        theta_star=np.zeros(3),
    )
    assert summary.kind == "markov"
    assert np.all(np.isfinite(summary.mean_err))
    assert summary.mean_err[0] == pytest.approx(np.sqrt(3.0))


def test_certified_ensemble_of_trajectory_example(trajectory_example):
    cert = build_cert(np.array([[[0.145]], [[-0.8]]]), 0.9, 4)
    summary = run_ensemble(
        trajectory_example, "det", 1, 3, 0, cert=cert, theta0=[-2.0]
    )
    assert summary.theta_star[0] == pytest.approx(0.0)
    assert summary.envelope.kind == "deterministic"
    assert summary.dominated()


def _strongly_regularized(trajectory_example):
    # regularized modes 0.5 - alpha (M - gamma N Pi Phi), all near 0.49
    return trajectory_example.replace(alpha=0.005, eta=100.0)


@pytest.mark.slow
def test_iid_mean_error_below_contracting_envelope(trajectory_example):
    p = _strongly_regularized(trajectory_example)
    cert = build_cert(build_family(p), 0.6, 4)
    summary = run_ensemble(p, "iid", 2000, 30, 5, cert=cert, theta0=[1.0])
    env = summary.envelope
    assert env.kind == "iid"
    assert env.lam < 1.0 and env.applicable
    np.testing.assert_allclose(summary.theta_star, [0.0], atol=1e-12)
    assert summary.diverged == 0
    assert summary.dominated()
    assert np.all(summary.mean_err <= env.euclid)
    assert np.all(summary.mean_p <= env.p * (1 + 1e-12))
    assert env.euclid[-1] < env.euclid[0]


@pytest.mark.slow
def test_markov_mean_error_below_contracting_envelope(trajectory_example):
    p = _strongly_regularized(trajectory_example)
    chain = markov_problem(p, stationary_distribution(p))
    cert = build_cert(build_family(chain), 0.6, 4)
    summary = run_ensemble(
        chain, "markov", 2000, 30, 6, cert=cert, theta0=[1.0]
    )
    env = summary.envelope
    expected = markov_envelope(
        bound_inputs(chain, cert, np.zeros(1)),
        float(lyap_norm(cert, np.ones(1))),
        30,
        x0_norm=1.0,
    )
    assert env.kind == "markov"
    assert env.lam == pytest.approx(expected.lam)
    np.testing.assert_allclose(env.euclid, expected.euclid)
    assert env.lam < 1.0 and env.applicable
    assert summary.diverged == 0
    assert summary.dominated()
    assert np.all(summary.mean_err <= env.euclid)
    assert np.all(summary.mean_p <= env.p * (1 + 1e-12))


@pytest.mark.parametrize("kind", ["deterministic", "iid", "markov"])
def test_divergence_is_recorded_alike_for_every_kind(pqvi, kind):
    spec = RngSpec(5)
    if kind == "deterministic":
        traj = run_deterministic(pqvi, [1.0], 50)
    elif kind == "iid":
        traj = run_iid(pqvi, [1.0], 50, spec)
        assert traj.noise_w.shape == (21, 1)
    else:
        chain = markov_problem(pqvi, stationary_distribution(pqvi))
        model = stationary_distribution(chain)
        traj = run_markov(chain, model, [1.0], 50, spec)
        assert traj.xi.shape == (21, 1)
        assert traj.states.shape == (22,)
    assert traj.status == "diverged"
    assert traj.diverged_at == 21
    assert traj.thetas.shape == (22, 1)
    assert traj.thetas[-1, 0] == pytest.approx((-4.0) ** 21)
