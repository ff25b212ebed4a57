"""Kuramoto network simulation and synchronization diagnostics."""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .graph import Graph

DEFAULT_STEP = 0.01
DEFAULT_HORIZON = 100.0
DEFAULT_TAIL = 0.2
DEFAULT_SYNC_TOL = 1e-6


class DivergenceError(RuntimeError):
    pass


class NotSynchronizedError(ValueError):
    pass


@dataclass(frozen=True)
class KuramotoSystem:
    graph: Graph
    w: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "w", np.asarray(self.w, dtype=float))
        object.__setattr__(self, "omega", np.asarray(self.omega, dtype=float))
        if self.w.shape != (self.graph.m,):
            raise ValueError(f"w must have length {self.graph.m}")
        if self.omega.shape != (self.graph.n,):
            raise ValueError(f"omega must have length {self.graph.n}")

    @property
    def n(self) -> int:
        return self.graph.n

    def rhs(self, theta: np.ndarray) -> np.ndarray:
        """omega - B diag(w) sin(B^T theta)."""
        B = self.graph.B
        return self.omega - B @ (self.w * np.sin(B.T @ theta))

    def jacobian(self, theta: np.ndarray) -> np.ndarray:
        B = self.graph.B
        return -(B * (self.w * np.cos(B.T @ theta))) @ B.T


def center_frequencies(system: KuramotoSystem) -> tuple[KuramotoSystem, float]:
    omega_s = float(np.mean(system.omega))
    return replace(system, omega=system.omega - omega_s), omega_s


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (len(times), n)
    rates: np.ndarray  # theta-dot at each sample

    def __len__(self) -> int:
        return len(self.times)

    def to_csv(self, path) -> None:
        path = Path(path)
        n = self.states.shape[1]
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t"] + [f"theta_{i}" for i in range(1, n + 1)])
            for t, row in zip(self.times, self.states):
                writer.writerow([f"{t:.9g}"] + [f"{x:.9g}" for x in row])


def integrate(
    system: KuramotoSystem,
    theta0=None,
    T: float = DEFAULT_HORIZON,
    h: float = DEFAULT_STEP,
) -> Trajectory:
    """Classical fixed-step RK4 on the unwrapped phases over ``[0, T]``."""
    if h <= 0:
        raise ValueError("step h must be positive")
    if T < h:
        raise ValueError("horizon T must be at least one step")
    n = system.n
    theta = np.zeros(n) if theta0 is None else np.array(theta0, dtype=float)
    steps = int(round(T / h))
    times = h * np.arange(steps + 1)
    states = np.empty((steps + 1, n))
    rates = np.empty((steps + 1, n))
    f = system.rhs
    states[0] = theta
    k1 = f(theta)
    rates[0] = k1
    for s in range(1, steps + 1):
        k2 = f(theta + 0.5 * h * k1)
        k3 = f(theta + 0.5 * h * k2)
        k4 = f(theta + h * k3)
        theta = theta + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(theta)):
            raise DivergenceError(f"non-finite state at t = {times[s]:.6g}")
        k1 = f(theta)
        states[s] = theta
        rates[s] = k1
    return Trajectory(times=times, states=states, rates=rates)


@dataclass(frozen=True)
class SyncStatus:
    synchronized: bool
    omega_s: float
    residual: float


def detect_sync(
    trajectory: Trajectory,
    tail_fraction: float = DEFAULT_TAIL,
    tol: float = DEFAULT_SYNC_TOL,
) -> SyncStatus:
    """Frequency synchronization test over the trailing ``tail_fraction`` of samples."""
    if len(trajectory) < 2:
        raise ValueError("trajectory needs at least two samples")
    count = max(2, int(np.ceil(tail_fraction * len(trajectory))))
    tail = trajectory.rates[-count:]
    mean = tail.mean(axis=1, keepdims=True)
    residual = float(np.max(np.abs(tail - mean)))
    return SyncStatus(
        synchronized=residual <= tol,
        omega_s=float(mean[-1, 0]),
        residual=residual,
    )


def wrap_angle(x):
    """Map angles to (-pi, pi]."""
    y = np.mod(np.asarray(x, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    return np.where(y == -np.pi, np.pi, y)


def edge_phase_differences(graph: Graph, theta) -> np.ndarray:
    return wrap_angle(graph.B.T @ np.asarray(theta, dtype=float))


def measure_cohesiveness(
    trajectory: Trajectory,
    graph: Graph,
    w=None,
    status: SyncStatus | None = None,
) -> float:
    """max over edges of |wrap(B^T theta(T))|, in radians.

    Edges with zero weight (if ``w`` is given) are not part of the network and
    are skipped.
    """
    if status is None:
        status = detect_sync(trajectory)
    if not status.synchronized:
        raise NotSynchronizedError(
            f"trajectory is not frequency-synchronized (residual {status.residual:.3g})"
        )
    diffs = np.abs(edge_phase_differences(graph, trajectory.states[-1]))
    if w is not None:
        diffs = diffs[np.asarray(w) > 0]
    return float(diffs.max()) if diffs.size else 0.0


def simulate(system: KuramotoSystem, T=DEFAULT_HORIZON, h=DEFAULT_STEP, theta0=None,
             tail_fraction=DEFAULT_TAIL, tol=DEFAULT_SYNC_TOL):
    """Integrate and classify; returns ``(trajectory, status, phi or None)``."""
    traj = integrate(system, theta0, T, h)
    status = detect_sync(traj, tail_fraction, tol)
    phi = measure_cohesiveness(traj, system.graph, system.w, status) if status.synchronized else None
    return traj, status, phi
