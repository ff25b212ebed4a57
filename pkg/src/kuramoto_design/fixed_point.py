"""Synchronized equilibria: Newton solve, stability, cycle-coordinate family and
the cohesiveness bound ||B^T L^+ omega||_inf."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import KuramotoSystem, wrap_angle
from .graph import GraphError, cycle_basis, laplacian_bundle

NEWTON_TOL = 1e-10
NEWTON_MAXITER = 100
MIN_STEP = 2.0**-20
CENTER_TOL = 1e-9


class NoFixedPointFound(RuntimeError):
    """Newton iteration failed from the given start; not a proof of nonexistence."""


class NotFound(RuntimeError):
    pass


def _require_centered(system: KuramotoSystem) -> None:
    scale = max(1.0, float(np.max(np.abs(system.omega))))
    if abs(float(np.sum(system.omega))) > CENTER_TOL * scale * system.n:
        raise ValueError("natural frequencies must be centered (sum to zero)")


@dataclass(frozen=True)
class CohesivenessReport:
    bound_sin: float
    bound_angle: float | None
    feasible: bool
    simulated_phi: float | None = None

    def to_json(self) -> dict:
        return {
            "bound_sin": self.bound_sin,
            "bound_angle": self.bound_angle,
            "feasible": self.feasible,
            "simulated_phi": self.simulated_phi,
        }


def edge_flows(system: KuramotoSystem) -> np.ndarray:
    """B^T L^+ omega for the (centered) system."""
    bundle = laplacian_bundle(system.graph, system.w)
    if not bundle.connected:
        raise GraphError("graph is disconnected (lambda2 <= tolerance)")
    return system.graph.B.T @ (bundle.Lpinv @ system.omega)


def cohesiveness_bound(system: KuramotoSystem, simulated_phi: float | None = None) -> CohesivenessReport:
    _require_centered(system)
    flows = edge_flows(system)
    s = float(np.max(np.abs(flows))) if flows.size else 0.0
    return CohesivenessReport(
        bound_sin=s,
        bound_angle=float(np.arcsin(s)) if s <= 1.0 else None,
        feasible=s < 1.0,
        simulated_phi=simulated_phi,
    )


@dataclass(frozen=True)
class FixedPoint:
    theta_star: np.ndarray
    residual: float
    stable: bool
    cohesiveness: float
    iterations: int = 0


def solve_fixed_point(system: KuramotoSystem, theta_init=None, ground: int = 0) -> FixedPoint:
    """Damped Newton on omega - B W sin(B^T theta) = 0 with ``theta[ground]`` pinned to 0.

    The default start is the linearization L^+ omega.
    """
    _require_centered(system)
    n = system.n
    if theta_init is None:
        bundle = laplacian_bundle(system.graph, system.w)
        theta = bundle.Lpinv @ system.omega
    else:
        theta = np.array(theta_init, dtype=float)
    theta = theta - theta[ground]
    free = np.array([i for i in range(n) if i != ground], dtype=int)

    def resid(th):
        return system.rhs(th)

    r = resid(theta)
    norm = float(np.max(np.abs(r)))
    it = 0
    while norm > NEWTON_TOL:
        if it >= NEWTON_MAXITER:
            raise NoFixedPointFound(f"no convergence in {NEWTON_MAXITER} iterations (residual {norm:.3g})")
        J = system.jacobian(theta)[np.ix_(free, free)]
        try:
            step = np.linalg.solve(J, -r[free])
        except np.linalg.LinAlgError as exc:
            raise NoFixedPointFound("singular Jacobian") from exc
        if not np.all(np.isfinite(step)):
            raise NoFixedPointFound("singular Jacobian")
        t = 1.0
        while True:
            trial = theta.copy()
            trial[free] += t * step
            r_trial = resid(trial)
            n_trial = float(np.max(np.abs(r_trial)))
            if n_trial < norm or t <= MIN_STEP:
                break
            t *= 0.5
        if n_trial >= norm:
            raise NoFixedPointFound(f"line search stalled (residual {norm:.3g})")
        theta, r, norm = trial, r_trial, n_trial
        it += 1
    coh = float(np.max(np.abs(wrap_angle(system.graph.B.T @ theta)))) if system.graph.m else 0.0
    return FixedPoint(theta_star=theta, residual=norm, stable=coh < np.pi / 2,
                      cohesiveness=coh, iterations=it)


@dataclass(frozen=True)
class StabilityVerdict:
    sufficient: bool
    spectral: bool
    eigenvalues: np.ndarray

    def __bool__(self) -> bool:
        return self.sufficient


def stability_check(system: KuramotoSystem, theta_star, tol: float = 1e-9) -> StabilityVerdict:
    """Edge-angle test |wrap(B^T theta*)| < pi/2, plus the Jacobian spectrum.

    ``spectral`` is true when the Jacobian has exactly one (near-)zero
    eigenvalue and all others strictly negative.
    """
    theta_star = np.asarray(theta_star, dtype=float)
    diffs = np.abs(wrap_angle(system.graph.B.T @ theta_star))
    sufficient = bool(np.all(diffs < np.pi / 2))
    eig = np.linalg.eigvalsh(system.jacobian(theta_star))
    zero = np.abs(eig) <= tol * max(1.0, float(np.max(np.abs(eig))))
    spectral = bool(zero.sum() == 1 and np.all(eig[~zero] < 0))
    return StabilityVerdict(sufficient=sufficient, spectral=spectral, eigenvalues=eig)


@dataclass(frozen=True)
class LemmaOneSolution:
    r: float
    particular: np.ndarray
    y: np.ndarray
    combined: np.ndarray
    F: np.ndarray
    box_residual: float  # max(|combined|) - 1, feasible when <= 0
    cycle_residual: float  # ||F^T arcsin(combined)||_inf, nan outside [-1, 1]

    @property
    def accepted(self) -> bool:
        return self.box_residual <= 0 and self.cycle_residual <= 1e-8


def _weight_power_parts(system: KuramotoSystem, r: float):
    w = system.w
    if np.any(w <= 0):
        raise GraphError("all edge weights must be positive (weight-singular)")
    B = system.graph.B
    bundle = laplacian_bundle(system.graph, w**r)
    if not bundle.connected:
        raise GraphError("graph is disconnected")
    particular = w ** (r - 1.0) * (B.T @ (bundle.Lpinv @ system.omega))
    return particular, cycle_basis(system.graph)


def _cycle_residual(F, combined):
    if F.shape[1] == 0:
        return 0.0
    if np.max(np.abs(combined)) > 1.0:
        return float("nan")
    return float(np.max(np.abs(F.T @ np.arcsin(combined))))


def lemma_one_evaluate(system: KuramotoSystem, r: float, y=None) -> LemmaOneSolution:
    """Evaluate W^(r-1) B^T (B W^r B^T)^+ omega + W^-1 F y and its two feasibility residuals."""
    _require_centered(system)
    particular, F = _weight_power_parts(system, r)
    y = np.zeros(F.shape[1]) if y is None else np.asarray(y, dtype=float)
    if y.shape != (F.shape[1],):
        raise ValueError(f"y must have length {F.shape[1]}")
    combined = particular + (F @ y) / system.w
    return LemmaOneSolution(
        r=r, particular=particular, y=y, combined=combined, F=F,
        box_residual=float(np.max(np.abs(combined)) - 1.0) if combined.size else -1.0,
        cycle_residual=_cycle_residual(F, combined),
    )


def lemma_one_solve_y(system: KuramotoSystem, r: float, tol: float = 1e-12,
                      maxiter: int = NEWTON_MAXITER) -> LemmaOneSolution:
    """Damped Newton for F^T arcsin(particular + W^-1 F y) = 0, starting at y = 0.

    Uses the principal arcsin branch; steps leaving [-1, 1] or increasing the
    residual are halved.
    """
    _require_centered(system)
    particular, F = _weight_power_parts(system, r)
    k = F.shape[1]
    if k == 0:
        return lemma_one_evaluate(system, r)
    G = F / system.w[:, None]  # W^-1 F

    def g(y):
        s = particular + G @ y
        if np.max(np.abs(s)) >= 1.0:
            return None, s
        return F.T @ np.arcsin(s), s

    y = np.zeros(k)
    val, s = g(y)
    if val is None:
        raise NotFound("particular solution already violates |sin| <= 1")
    norm = float(np.max(np.abs(val)))
    for _ in range(maxiter):
        if norm <= tol:
            break
        Jy = F.T @ (G / np.sqrt(1.0 - s**2)[:, None])
        try:
            step = np.linalg.solve(Jy, -val)
        except np.linalg.LinAlgError as exc:
            raise NotFound("singular cycle Jacobian") from exc
        t = 1.0
        while t >= MIN_STEP:
            v_trial, s_trial = g(y + t * step)
            if v_trial is not None and np.max(np.abs(v_trial)) < norm:
                break
            t *= 0.5
        else:
            break
        y = y + t * step
        val, s = v_trial, s_trial
        norm = float(np.max(np.abs(val)))
    if norm > max(tol, 1e-10):
        raise NotFound(f"no root of the cycle condition (residual {norm:.3g})")
    return lemma_one_evaluate(system, r, y)
