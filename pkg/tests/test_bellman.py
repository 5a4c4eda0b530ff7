#!/usr/bin/env python

"""Tests for the Bellman and projection maps."""

import numpy as np
import pytest

from switchq.bellman import (
    coordinate_bias,
    projected_residual,
    q_table,
    regularized_residual,
    residual_g,
    rpvi_sup_contraction,
    sample_update,
    solve_fixed_point,
    step_dlq,
    step_pqvi,
    step_reg_dlq,
    step_rpvi,
    td_errors,
    transition_noise,
    value_max,
)
from switchq.exceptions import InvalidOverride
from switchq.lyapunov import build_cert
from switchq.switching import build_family
from tests.conftest import random_problem, with_fixed_point


def test_projection_is_idempotent_and_symmetric(example3d):
    cache = example3d.projection
    np.testing.assert_allclose(cache.Pi_D @ cache.Pi_D, cache.Pi_D, atol=1e-12)
    np.testing.assert_array_equal(cache.M, cache.M.T)


def test_greedy_value_of_jsr_example(jsr_gt1):
    vm = value_max(jsr_gt1, [-2.0])
    np.testing.assert_allclose(vm.V, [4.0])
    assert list(vm.argmax) == [1]


def test_greedy_value_ties_pick_first_action(example3d):
    vm = value_max(example3d, np.zeros(3))
    assert list(vm.argmax) == [0, 0, 0]
    np.testing.assert_array_equal(vm.V, np.zeros(3))


def test_greedy_value_matches_enumeration(rng):
    p = random_problem(1)
    for _ in range(20):
        theta = rng.standard_normal(p.m)
        q = q_table(p, theta)
        for s in range(p.n_states):
            direct = max(
                p.features[p.pair_index(s, a)] @ theta
                for a in range(p.n_actions)
            )
            assert value_max(p, theta).V[s] == pytest.approx(direct)
            assert q[s].max() == pytest.approx(direct)


def test_residual_vanishes_at_zero_for_zero_reward(elq):
    np.testing.assert_array_equal(residual_g(elq, [0.0]), [0.0])


def test_residual_on_positive_half_line(jsr_gt1):
    # T(1) = 0.397 for theta >= 0
    assert residual_g(jsr_gt1, [1.0])[0] == pytest.approx(
        (0.397 - 1.0) / 0.9, abs=1e-12
    )


@pytest.mark.parametrize("theta", [-3.0, -0.5, 0.0, 2.0, 11.0])
def test_elq_step_is_zero(elq, theta):
    assert step_dlq(elq, [theta])[0] == pytest.approx(0.0, abs=1e-12)


def test_pqvi_example_multipliers(pqvi, elq):
    assert step_dlq(pqvi, [1.0])[0] == pytest.approx(-4.0)
    assert step_pqvi(pqvi, [1.0])[0] == pytest.approx(0.9)
    assert step_pqvi(elq, [1.0])[0] == pytest.approx(-8.01 / 1.99)
    assert step_pqvi(elq, [0.0])[0] == 0.0


def test_regularized_multipliers(pqvi, elq):
    reg_pqvi, reg_elq = pqvi.replace(eta=1.0), elq.replace(eta=1.0)
    assert step_reg_dlq(reg_pqvi, [1.0])[0] == pytest.approx(-4.5)
    assert step_reg_dlq(reg_elq, [1.0])[0] == pytest.approx(-0.1)
    assert step_rpvi(reg_pqvi, [1.0])[0] == pytest.approx(90.0 / 101.0)
    assert step_rpvi(reg_elq, [1.0])[0] == pytest.approx(-8.01 / 2.99)


def test_regularized_maps_reduce_at_zero_eta(rng):
    p = random_problem(2)
    for _ in range(10):
        theta = rng.standard_normal(p.m)
        np.testing.assert_allclose(
            step_reg_dlq(p, theta), step_dlq(p, theta), atol=1e-13
        )
        np.testing.assert_allclose(
            step_rpvi(p, theta), step_pqvi(p, theta), atol=1e-12
        )


def test_rpvi_sup_contraction(pqvi, elq):
    sup = rpvi_sup_contraction(pqvi.replace(eta=1.0))
    assert sup.value == pytest.approx(90.0 / 101.0)
    assert sup.contracts
    assert rpvi_sup_contraction(pqvi.replace(eta=1e9)).value < 1e-6
    sup = rpvi_sup_contraction(elq.replace(eta=1.0))
    assert sup.value == pytest.approx(0.9 * 8.9 / 2.99)
    assert not sup.contracts


def test_solver_elq_one_step(elq):
    report = solve_fixed_point(elq, theta0=[1.0])
    assert report.converged
    np.testing.assert_array_equal(report.theta_star, [0.0])
    assert report.iterations <= 2


def test_solver_reports_divergence(pqvi):
    report = solve_fixed_point(pqvi, theta0=[1.0])
    assert report.status == "diverged"
    # |(-4)^k| first exceeds 1e12 * (1 + 1) at k = 21
    assert report.diverged_at == 21
    assert not report.converged


def test_solver_max_iter_is_a_status(pqvi):
    report = solve_fixed_point(pqvi, map="pqvi", theta0=[1.0], max_iter=3)
    assert report.status == "max_iter"
    assert report.iterations == 3


def test_solver_converges_despite_large_jsr(jsr_gt1):
    report = solve_fixed_point(jsr_gt1, theta0=[-2.0])
    assert report.converged
    assert abs(report.theta_star[0]) < 1e-9
    assert not report.certified


def test_solver_rejects_unknown_map(elq):
    with pytest.raises(InvalidOverride):
        solve_fixed_point(elq, map="sarsa")


def test_certified_fixed_point_of_example3d(fixed_point3d):
    p, theta_star = fixed_point3d
    cert = build_cert(build_family(p), 0.975, 4)
    report = solve_fixed_point(p, certificate=cert)
    assert report.converged and report.certified
    assert report.final_residual <= 1e-10
    np.testing.assert_allclose(report.theta_star, theta_star, atol=1e-8)


def test_regularized_solver(pqvi):
    p = pqvi.replace(eta=1.0)
    report = solve_fixed_point(p, map="rpvi", theta0=[1.0])
    assert report.converged
    assert np.linalg.norm(regularized_residual(p, report.theta_star)) < 1e-9


def test_sample_update_averages_to_residual(rng):
    for eta in (0.0, 0.3):
        p = random_problem(4, eta=eta)
        theta = rng.standard_normal(p.m)
        mean = sum(
            p.sampling[i]
            * p.P[i, s]
            * sample_update(p, theta, i, s)
            for i in range(p.n_pairs)
            for s in range(p.n_states)
        )
        np.testing.assert_allclose(
            mean, regularized_residual(p, theta), atol=1e-12
        )


def test_sample_update_decomposes_into_noise_and_bias(rng):
    p = random_problem(6, eta=0.2)
    theta = rng.standard_normal(p.m)
    for i in range(p.n_pairs):
        for s in range(p.n_states):
            parts = (
                transition_noise(p, theta, i, s)
                + coordinate_bias(p, theta, i)
                + residual_g(p, theta)
                - p.eta * theta
            )
            np.testing.assert_allclose(
                sample_update(p, theta, i, s), parts, atol=1e-12
            )


def test_transition_noise_has_zero_conditional_mean(rng):
    p = random_problem(9)
    theta = rng.standard_normal(p.m)
    for i in range(p.n_pairs):
        mean = sum(
            p.P[i, s] * transition_noise(p, theta, i, s)
            for s in range(p.n_states)
        )
        np.testing.assert_allclose(mean, 0.0, atol=1e-13)


def test_bias_averages_out_under_sampling(rng):
    p = random_problem(10)
    theta = rng.standard_normal(p.m)
    mean = sum(
        p.sampling[i] * coordinate_bias(p, theta, i) for i in range(p.n_pairs)
    )
    np.testing.assert_allclose(mean, 0.0, atol=1e-12)
    np.testing.assert_allclose(
        p.projection.K @ td_errors(p, theta), residual_g(p, theta), atol=1e-12
    )


def _whitened(p, scale):
    """same problem with features rescaled so that Phi^T D Phi = scale I"""
    w, V = np.linalg.eigh(p.projection.M)
    root = V @ np.diag(w**-0.5) @ V.T
    return p.replace(features=np.sqrt(scale) * p.features @ root)


@pytest.mark.parametrize("seed", [21, 22, 23])
def test_dlq_is_a_residual_step_towards_pqvi(seed):
    p = random_problem(seed)
    M = p.projection.M
    rng = np.random.default_rng(seed)
    for _ in range(20):
        theta = 2.0 * rng.standard_normal(p.m)
        np.testing.assert_allclose(
            step_dlq(p, theta),
            theta + p.alpha * M @ (step_pqvi(p, theta) - theta),
            atol=1e-11,
        )


@pytest.mark.parametrize("seed", [24, 25, 26])
def test_regularized_dlq_is_a_residual_step_towards_rpvi(seed):
    p = random_problem(seed, eta=0.6)
    M_eta = p.projection.M_eta
    rng = np.random.default_rng(seed)
    for _ in range(20):
        theta = 2.0 * rng.standard_normal(p.m)
        np.testing.assert_allclose(
            step_reg_dlq(p, theta),
            theta + p.alpha * M_eta @ (step_rpvi(p, theta) - theta),
            atol=1e-11,
        )


def test_dlq_coincides_with_pqvi_when_step_inverts_m(rng):
    p = _whitened(random_problem(27), 1.0 / 0.1)
    np.testing.assert_allclose(p.alpha * p.projection.M, np.eye(3), atol=1e-12)
    for _ in range(10):
        theta = rng.standard_normal(3)
        np.testing.assert_allclose(
            step_dlq(p, theta), step_pqvi(p, theta), atol=1e-10
        )


def test_regularized_dlq_coincides_with_rpvi(rng):
    # alpha (M + eta I) = 0.1 * (8 + 2) = 1
    p = _whitened(random_problem(28, eta=2.0), 8.0)
    for _ in range(10):
        theta = rng.standard_normal(3)
        np.testing.assert_allclose(
            step_reg_dlq(p, theta), step_rpvi(p, theta), atol=1e-10
        )


@pytest.mark.parametrize("seed", [31, 32, 33, 34])
def test_fixed_point_characterizations_agree(seed):
    p, theta_star = with_fixed_point(random_problem(seed), seed=seed)
    for step in (step_dlq, step_pqvi):
        np.testing.assert_allclose(step(p, theta_star), theta_star, atol=1e-10)
    assert projected_residual(p, theta_star) < 1e-10

    rng = np.random.default_rng(seed)
    for _ in range(10):
        theta = theta_star + 0.5 * rng.standard_normal(p.m)
        assert np.linalg.norm(step_dlq(p, theta) - theta) > 1e-8
        assert np.linalg.norm(step_pqvi(p, theta) - theta) > 1e-8
        assert np.linalg.norm(residual_g(p, theta)) > 1e-8
        assert projected_residual(p, theta) > 1e-8


def test_certificate_of_another_family_does_not_certify(fixed_point3d):
    p, theta_star = fixed_point3d
    other = build_cert(0.5 * build_family(p).modes, 0.975, 2)
    report = solve_fixed_point(p, certificate=other)
    assert report.converged
    assert not report.certified
    np.testing.assert_allclose(report.theta_star, theta_star, atol=1e-8)


def test_certificate_only_covers_its_own_map(fixed_point3d):
    p, _ = fixed_point3d
    cert = build_cert(build_family(p), 0.975, 2)
    assert not solve_fixed_point(p, map="pqvi", certificate=cert).certified
    regular = p.replace(eta=0.01)
    report = solve_fixed_point(regular, "reg_dlq", certificate=cert)
    assert not report.certified
    reg_cert = build_cert(build_family(regular), 0.99, 2)
    report = solve_fixed_point(regular, "reg_dlq", certificate=reg_cert)
    assert report.converged and report.certified
