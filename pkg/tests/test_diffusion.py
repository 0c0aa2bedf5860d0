import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import null_space

from conftest import complete, cycle, random_instance
from flowredirect.diffusion import (build_diffusion, build_policy, check_diffusion, diffusion_from_theta,
                                    stationary_distribution, stationary_jacobian, stationary_vjp, theta_vjp)
from flowredirect.errors import IndexMismatch, InvariantViolation
from flowredirect.graph import Graph


def test_policy_single_neighbour():
    pi = build_policy(cycle(2), [3.0, -7.0])
    np.testing.assert_array_equal(pi, [[0, 1], [1, 0]])


def test_policy_equal_weights_split_evenly():
    pi = build_policy(complete(3), np.zeros(6))
    assert pi[0, 1] == pi[0, 2] == 0.5


def test_policy_closed_form_softmax():
    g = complete(3)  # edges sorted: (0,1) (0,2) (1,0) ...
    theta = np.zeros(6)
    theta[0] = math.log(2)
    pi = build_policy(g, theta)
    assert pi[0, 1] == pytest.approx(2 / 3, abs=1e-15)
    assert pi[0, 2] == pytest.approx(1 / 3, abs=1e-15)


def test_policy_is_stable_for_large_theta():
    pi = build_policy(complete(3), np.array([800.0, 0, 0, 0, 0, -800.0]))
    assert np.all(np.isfinite(pi))
    np.testing.assert_allclose(pi.sum(axis=1), 1.0)


def test_policy_rejects_wrong_length():
    with pytest.raises(IndexMismatch):
        build_policy(complete(3), np.zeros(5))


def test_diffusion_two_cycle_by_hand():
    m = build_diffusion(build_policy(cycle(2), [0, 0]), [1.0, 2.0], 1.0)
    np.testing.assert_array_equal(m, [[-1, 2], [1, -2]])


def test_diffusion_tau_halves_entries():
    g, f, theta, _ = random_instance(7, 3)
    np.testing.assert_array_equal(diffusion_from_theta(g, theta, f, 2.0), diffusion_from_theta(g, theta, f, 1.0) / 2)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 12), st.integers(0, 1000))
def test_diffusion_is_metzler_with_zero_column_sums(n, seed):
    g, f, theta, _ = random_instance(n, seed)
    m = diffusion_from_theta(g, theta, f, 0.7)
    check_diffusion(m)
    assert np.abs(m.sum(axis=0)).max() <= 1e-15 * 10


def test_check_diffusion_rejects_bad_matrix():
    with pytest.raises(InvariantViolation):
        check_diffusion(np.array([[-1.0, -1.0], [1.0, 1.0]]))


def test_stationary_two_cycle_matches_null_space():
    m = np.array([[-1.0, 2.0], [1.0, -2.0]])
    mu = stationary_distribution(m)
    ns = null_space(m)[:, 0]
    np.testing.assert_allclose(mu, ns / ns.sum(), atol=1e-15)
    np.testing.assert_allclose(mu, [2 / 3, 1 / 3], atol=1e-15)


def test_stationary_symmetric_cases():
    m = build_diffusion(build_policy(cycle(2), [0, 0]), [0.3, 0.3])
    np.testing.assert_allclose(stationary_distribution(m), [0.5, 0.5], atol=1e-15)
    m = build_diffusion(build_policy(cycle(3), [0, 0, 0]), [0.2] * 3)
    np.testing.assert_allclose(stationary_distribution(m), [1 / 3] * 3, atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 15), st.integers(0, 1000))
def test_stationary_agrees_with_null_space(n, seed):
    g, f, theta, _ = random_instance(n, seed)
    m = diffusion_from_theta(g, theta, f)
    mu = stationary_distribution(m)
    ns = null_space(m)[:, 0]
    np.testing.assert_allclose(mu, ns / ns.sum(), rtol=1e-9)
    assert np.all(mu > 0)


def test_stationary_jacobian_zero_on_cycle():
    g = cycle(5)
    jac = stationary_jacobian(g, np.linspace(-1, 1, 5), np.full(5, 0.3))
    np.testing.assert_array_equal(jac, 0.0)


def test_stationary_jacobian_matches_finite_differences():
    g, f, theta, _ = random_instance(5, 8, p=0.6)
    jac = stationary_jacobian(g, theta, f)
    h = 1e-6
    fd = np.empty_like(jac)
    for e in range(g.edge_count):
        tp, tm = theta.copy(), theta.copy()
        tp[e] += h
        tm[e] -= h
        fd[:, e] = (stationary_distribution(diffusion_from_theta(g, tp, f))
                    - stationary_distribution(diffusion_from_theta(g, tm, f))) / (2 * h)
    assert np.abs(jac - fd).max() <= 1e-6
    np.testing.assert_allclose(jac.sum(axis=0), 0.0, atol=1e-14)


def test_stationary_vjp_matches_jacobian():
    g, f, theta, _ = random_instance(8, 2)
    m = diffusion_from_theta(g, theta, f)
    mu = stationary_distribution(m)
    cot = np.random.default_rng(0).normal(size=8)
    jac = stationary_jacobian(g, theta, f)
    grad = theta_vjp(g, build_policy(g, theta), f, 1.0, stationary_vjp(m, mu, cot))
    np.testing.assert_allclose(grad, cot @ jac, rtol=1e-10, atol=1e-14)


def test_single_node_is_trivial():
    g = Graph(1, [])
    m = diffusion_from_theta(g, np.zeros(0), [0.3])
    np.testing.assert_array_equal(m, [[0.0]])
    np.testing.assert_array_equal(stationary_distribution(m), [1.0])
