import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kuramoto_design.dynamics import KuramotoSystem, simulate
from kuramoto_design.fixed_point import (NoFixedPointFound, NotFound, cohesiveness_bound,
                                         lemma_one_evaluate, lemma_one_solve_y, solve_fixed_point,
                                         stability_check)
from kuramoto_design.graph import GraphError, build_incidence, laplacian_bundle

from conftest import centered, random_connected, random_tree


def test_bound_zero_frequencies(triangle):
    r = cohesiveness_bound(KuramotoSystem(triangle, np.ones(3), np.zeros(3)))
    assert r.bound_sin == 0 and r.bound_angle == 0 and r.feasible


@pytest.mark.parametrize("a, angle", [(0.5, np.pi / 6), (0.95, np.arcsin(0.95))])
def test_bound_two_node(two_node, a, angle):
    r = cohesiveness_bound(KuramotoSystem(two_node, [1.0], [a, -a]))
    assert r.bound_sin == pytest.approx(a, abs=1e-14)
    assert r.bound_angle == pytest.approx(angle, abs=1e-14)


def test_bound_overload(two_node):
    r = cohesiveness_bound(KuramotoSystem(two_node, [1.0], [1.5, -1.5]))
    assert not r.feasible and r.bound_angle is None


def test_bound_requires_centering_and_connectivity(two_node):
    with pytest.raises(ValueError):
        cohesiveness_bound(KuramotoSystem(two_node, [1.0], [1.0, 0.0]))
    g = build_incidence([(1, 2)], 3)
    with pytest.raises(GraphError):
        cohesiveness_bound(KuramotoSystem(g, [1.0], [0.1, 0.0, -0.1]))


def test_fixed_point_zero(triangle):
    fp = solve_fixed_point(KuramotoSystem(triangle, np.ones(3), np.zeros(3)))
    np.testing.assert_allclose(fp.theta_star, 0.0)
    assert fp.residual == 0.0


def test_fixed_point_chain():
    g = build_incidence([(1, 2), (2, 3)], 3)
    fp = solve_fixed_point(KuramotoSystem(g, [1.0, 1.0], [0.5, 0.0, -0.5]))
    np.testing.assert_allclose(np.sin(g.B.T @ fp.theta_star), [-0.5, -0.5], atol=1e-12)
    assert fp.cohesiveness == pytest.approx(np.pi / 6, abs=1e-12)
    assert fp.theta_star[0] == 0.0 and fp.stable and fp.residual <= 1e-10


def test_fixed_point_overload(two_node):
    with pytest.raises(NoFixedPointFound):
        solve_fixed_point(KuramotoSystem(two_node, [1.0], [1.5, -1.5]))


def test_grounding_invariance(rng):
    g = random_connected(7, 5, rng)
    sys7 = KuramotoSystem(g, rng.uniform(1, 2, g.m), centered(rng, 7, 0.5))
    a = solve_fixed_point(sys7, ground=0).theta_star
    b = solve_fixed_point(sys7, ground=4).theta_star
    np.testing.assert_allclose(a - a[0], b - b[0], atol=1e-10)


def test_stability_two_node(two_node):
    sys2 = KuramotoSystem(two_node, [1.0], [0.5, -0.5])
    fp = solve_fixed_point(sys2)
    v = stability_check(sys2, fp.theta_star)
    assert v and v.spectral
    bad = stability_check(sys2, np.array([2.0, 0.0]))
    assert not bad.sufficient


def test_stability_identical(triangle):
    sys3 = KuramotoSystem(triangle, [1.0, 2.0, 3.0], np.zeros(3))
    v = stability_check(sys3, np.zeros(3))
    assert v.sufficient and v.spectral
    L = laplacian_bundle(triangle, [1.0, 2.0, 3.0]).L
    np.testing.assert_allclose(np.sort(v.eigenvalues), np.sort(-np.linalg.eigvalsh(L)), atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 8), st.integers(0, 6), st.integers(0, 2**32 - 1))
def test_jacobian_matches_finite_differences(n, extra, seed):
    rng = np.random.default_rng(seed)
    g = random_connected(n, extra, rng)
    sysk = KuramotoSystem(g, rng.uniform(0.1, 2, g.m), centered(rng, n))
    theta = rng.uniform(-np.pi, np.pi, n)
    J = sysk.jacobian(theta)
    h = 1e-6
    fd = np.column_stack([(sysk.rhs(theta + h * e) - sysk.rhs(theta - h * e)) / (2 * h) for e in np.eye(n)])
    assert np.max(np.abs(J - fd)) <= 1e-6 * max(1.0, np.max(np.abs(J)))


def test_lemma_one_tree_independent_of_r(rng):
    g = random_tree(6, rng)
    sys6 = KuramotoSystem(g, rng.uniform(0.5, 2, g.m), centered(rng, 6, 0.3))
    base = g.B.T @ laplacian_bundle(g, sys6.w).Lpinv @ sys6.omega
    s1 = lemma_one_evaluate(sys6, 1.0)
    s0 = lemma_one_evaluate(sys6, 0.0)
    assert s1.y.size == 0
    np.testing.assert_allclose(s1.combined, base, atol=1e-12)
    np.testing.assert_allclose(s0.combined, s1.combined, atol=1e-10)
    assert s1.accepted


@pytest.mark.parametrize("r", [0.0, 1.0, 2.0])
def test_lemma_one_particular_balances_flow(rng, r):
    g = random_connected(7, 5, rng)
    sys7 = KuramotoSystem(g, rng.uniform(0.5, 2, g.m), centered(rng, 7))
    s = lemma_one_evaluate(sys7, r)
    np.testing.assert_allclose(g.B @ (sys7.w * s.particular), sys7.omega, atol=1e-10)


def test_lemma_one_triangle_needs_y(triangle):
    sys3 = KuramotoSystem(triangle, np.ones(3), [0.6, 0.0, -0.6])
    assert lemma_one_evaluate(sys3, 1.0).cycle_residual > 1e-3


def test_lemma_one_triangle_cross_validation(triangle):
    sys3 = KuramotoSystem(triangle, np.ones(3), [0.6, 0.0, -0.6])
    fp = solve_fixed_point(sys3)
    target = np.sin(triangle.B.T @ fp.theta_star)
    for r in (0.0, 1.0):
        sol = lemma_one_solve_y(sys3, r)
        np.testing.assert_allclose(sol.combined, target, atol=1e-6)
        assert sol.cycle_residual <= 1e-8 and sol.accepted


def test_lemma_one_zero_frequencies(triangle):
    sol = lemma_one_solve_y(KuramotoSystem(triangle, np.ones(3), np.zeros(3)), 1.0)
    np.testing.assert_allclose(sol.y, 0.0)
    np.testing.assert_allclose(sol.combined, 0.0)


def test_lemma_one_rejects_zero_weight(triangle):
    with pytest.raises(GraphError):
        lemma_one_evaluate(KuramotoSystem(triangle, [1.0, 0.0, 1.0], [0.1, 0.0, -0.1]), 1.0)


def test_lemma_one_not_found_when_overloaded(two_node):
    g = build_incidence([(1, 2), (2, 3), (1, 3)], 3)
    with pytest.raises(NotFound):
        lemma_one_solve_y(KuramotoSystem(g, np.ones(3), [3.0, 0.0, -3.0]), 1.0)


@settings(max_examples=15, deadline=None)
@given(st.integers(3, 7), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_bound_is_upper_bound(n, extra, seed):
    rng = np.random.default_rng(seed)
    g = random_connected(n, extra, rng)
    sysk = KuramotoSystem(g, rng.uniform(0.5, 2, g.m), centered(rng, n, 0.6))
    report = cohesiveness_bound(sysk)
    if not report.feasible:
        return
    try:
        fp = solve_fixed_point(sysk)
    except NoFixedPointFound:
        return
    if fp.cohesiveness >= np.pi / 2:
        return
    _, status, phi = simulate(sysk, T=60)
    assert status.synchronized
    assert phi <= report.bound_angle + 1e-3


def test_report_json(two_node):
    r = cohesiveness_bound(KuramotoSystem(two_node, [1.0], [0.5, -0.5]), simulated_phi=0.52)
    assert r.to_json()["simulated_phi"] == 0.52
