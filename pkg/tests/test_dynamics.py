import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kuramoto_design.dynamics import (KuramotoSystem, NotSynchronizedError, Trajectory,
                                      center_frequencies, detect_sync, integrate,
                                      measure_cohesiveness, simulate, wrap_angle)
from kuramoto_design.graph import build_incidence

from conftest import centered, random_connected


def two(omega, w=1.0):
    return KuramotoSystem(build_incidence([(1, 2)], 2), [w], omega)


@pytest.mark.parametrize("omega, expect, mean", [
    ((1.0, 1.0), (0.0, 0.0), 1.0),
    ((0.5, -0.5), (0.5, -0.5), 0.0),
    ((2.0, 0.0, 1.0), (1.0, -1.0, 0.0), 1.0),
])
def test_center_frequencies(omega, expect, mean):
    n = len(omega)
    g = build_incidence([(i, i + 1) for i in range(1, n)], n)
    sys_c, omega_s = center_frequencies(KuramotoSystem(g, np.ones(n - 1), omega))
    np.testing.assert_allclose(sys_c.omega, expect)
    assert omega_s == pytest.approx(mean)


def test_identical_oscillators_phase_sync(rng):
    g = random_connected(6, 4, rng)
    theta0 = rng.uniform(-0.5, 0.5, 6)
    traj, status, phi = simulate(KuramotoSystem(g, np.ones(g.m), np.zeros(6)), theta0=theta0)
    assert status.synchronized
    assert phi <= 1e-4


def test_two_node_converges_to_analytic_gap():
    traj, status, phi = simulate(two([0.5, -0.5]))
    gap = traj.states[-1, 0] - traj.states[-1, 1]
    assert gap == pytest.approx(np.arcsin(0.5), abs=1e-6)
    assert status.synchronized and abs(status.omega_s) < 1e-9
    assert phi == pytest.approx(np.pi / 6, abs=1e-4)


def test_two_node_drift():
    traj, status, phi = simulate(two([1.5, -1.5]))
    assert not status.synchronized
    assert status.residual >= 0.1
    assert phi is None
    with pytest.raises(NotSynchronizedError):
        measure_cohesiveness(traj, two([1.5, -1.5]).graph, status=status)


def test_equilibrium_trajectory_has_zero_residual():
    theta = np.array([np.pi / 6, 0.0])
    times = np.linspace(0, 1, 11)
    traj = Trajectory(times, np.tile(theta, (11, 1)), np.zeros((11, 2)))
    status = detect_sync(traj)
    assert status.synchronized and status.residual == 0.0


def test_detect_sync_needs_two_samples():
    with pytest.raises(ValueError):
        detect_sync(Trajectory(np.zeros(1), np.zeros((1, 2)), np.zeros((1, 2))))


def test_integrate_arguments():
    with pytest.raises(ValueError):
        integrate(two([0.0, 0.0]), h=0.0)
    with pytest.raises(ValueError):
        integrate(two([0.0, 0.0]), T=0.001, h=0.01)


@settings(max_examples=15, deadline=None)
@given(st.integers(2, 8), st.integers(0, 6), st.floats(-2, 2), st.integers(0, 2**32 - 1))
def test_mean_frequency_conservation(n, extra, shift, seed):
    rng = np.random.default_rng(seed)
    g = random_connected(n, extra, rng)
    omega = centered(rng, n, 2.0) + shift
    traj = integrate(KuramotoSystem(g, rng.uniform(0.2, 2, g.m), omega), T=5.0)
    np.testing.assert_allclose(traj.rates.mean(axis=1), shift, atol=1e-9)


def test_rk4_fourth_order():
    sys2 = two([0.9, -0.9], w=1.0)
    T = 2.0
    ref = integrate(sys2, T=T, h=0.0025).states[-1]
    e1 = np.linalg.norm(integrate(sys2, T=T, h=0.1).states[-1] - ref)
    e2 = np.linalg.norm(integrate(sys2, T=T, h=0.05).states[-1] - ref)
    ratio = e1 / e2
    assert 16 * 0.7 <= ratio <= 16 * 1.3


def test_wrap_range_and_shift_invariance(rng):
    x = rng.uniform(-20, 20, 1000)
    y = wrap_angle(x)
    assert np.all(y > -np.pi) and np.all(y <= np.pi)
    assert wrap_angle(np.pi) == np.pi and wrap_angle(-np.pi) == np.pi
    g = build_incidence([(1, 2), (2, 3)], 3)
    sys3 = KuramotoSystem(g, [1.0, 1.0], [0.3, 0.0, -0.3])
    traj, status, phi = simulate(sys3, T=40)
    shifted = Trajectory(traj.times, traj.states + np.array([2 * np.pi, 0, -4 * np.pi]), traj.rates)
    assert measure_cohesiveness(shifted, g, status=status) == pytest.approx(phi, abs=1e-12)


def test_zero_weight_edges_are_not_measured():
    g = build_incidence([(1, 2), (2, 3), (1, 3)], 3)
    sys3 = KuramotoSystem(g, [1.0, 1.0, 0.0], [0.4, 0.0, -0.4])
    traj, status, phi = simulate(sys3)
    assert phi == pytest.approx(np.arcsin(0.4), abs=1e-4)


def test_csv_layout(tmp_path):
    traj = integrate(two([0.5, -0.5]), T=0.05)
    p = tmp_path / "t.csv"
    traj.to_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0] == "t,theta_1,theta_2"
    assert len(lines) == len(traj) + 1
    assert lines[2].split(",")[0] == "0.01"
