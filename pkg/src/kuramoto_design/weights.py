"""Cohesiveness-constrained edge-weight design.

The pseudoinverse appearing in the cohesiveness constraint is replaced by a
matrix variable ``Lbar`` tied to the Laplacian through the LMI
``[[L + 11^T/n, I], [I, Lbar]] >= 0`` and pushed onto ``(L + 11^T/n)^-1`` by a
trace penalty ``alpha * tr(Lbar)``. Every accepted solve is certified by
re-inverting the designed Laplacian and comparing against ``Lbar``.

Box uncertainty on the natural frequencies is handled per edge and per sign
by the dual of ``max {a^T omega : lower <= omega <= upper, 1^T omega = 0}``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

from . import conic
from .conic import Infeasible
from .graph import Graph, GraphError, laplacian_bundle

log = logging.getLogger(__name__)

TIGHTNESS_TOL = 1e-4
DEFAULT_BETA = 1e-4
ALPHA_CAP = 2.0**10


class AlphaTooSmall(RuntimeError):
    """The LMI relaxation is not tight at the requested alpha."""

    def __init__(self, message, tightness, result=None):
        super().__init__(message)
        self.tightness = tightness
        self.result = result


class TightnessUnreachable(RuntimeError):
    pass


@dataclass(frozen=True)
class OmegaBox:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("box bounds must be vectors of equal length")
        if np.any(lo > hi):
            raise ValueError("box lower bound exceeds upper bound")
        tol = 1e-12 * max(1.0, float(np.abs(lo).sum() + np.abs(hi).sum()))
        if lo.sum() > tol or hi.sum() < -tol:
            raise ValueError("box has no zero-sum member")

    @classmethod
    def point(cls, omega) -> "OmegaBox":
        omega = np.asarray(omega, dtype=float)
        return cls(omega.copy(), omega.copy())

    @classmethod
    def centered(cls, lower, upper) -> "OmegaBox":
        """Box shifted so that its midpoint has zero mean."""
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        shift = 0.5 * (lower + upper).mean()
        return cls(lower - shift, upper - shift)

    @property
    def n(self) -> int:
        return self.lower.size

    @property
    def is_point(self) -> bool:
        return bool(np.all(self.lower == self.upper))


def max_linear_over_box(a, box: OmegaBox) -> tuple[float, np.ndarray]:
    """Exact maximizer of ``a^T omega`` over the zero-sum slice of ``box``.

    Starts from the lower corner and spends the remaining sum on the
    coordinates with the largest ``a`` first (continuous knapsack).
    """
    a = np.asarray(a, dtype=float)
    omega = box.lower.copy()
    budget = -omega.sum()
    for i in np.argsort(-a, kind="stable"):
        if budget <= 0:
            break
        step = min(box.upper[i] - box.lower[i], budget)
        # land exactly on the bound so the result stays inside the box
        omega[i] = box.upper[i] if step == box.upper[i] - box.lower[i] else omega[i] + step
        budget -= step
    return float(a @ omega), omega


def worst_case_omega(graph: Graph, w, box: OmegaBox, rows: np.ndarray | None = None):
    """Frequencies in ``box`` maximizing ``||B^T L^+ omega||_inf``.

    Returns ``(omega_tilde, value, per_row_values)`` where ``per_row_values``
    has shape ``(m, 2)`` with the maxima of ``+b_k^T L^+ omega`` and
    ``-b_k^T L^+ omega``. ``rows`` optionally restricts the edges considered
    (defaults to all edges of ``graph``).
    """
    bundle = laplacian_bundle(graph, w)
    if not bundle.connected:
        raise GraphError("designed graph is disconnected")
    R = graph.B.T @ bundle.Lpinv if rows is None else rows @ bundle.Lpinv
    vals = np.empty((R.shape[0], 2))
    best, best_omega = -np.inf, None
    for k, a in enumerate(R):
        for side, sign in enumerate((1.0, -1.0)):
            v, om = max_linear_over_box(sign * a, box)
            vals[k, side] = v
            if v > best:
                best, best_omega = v, om
    if best_omega is None:
        best, best_omega = 0.0, box.lower.copy()
    return best_omega, float(best), vals


@dataclass
class RobustConstraintBlock:
    """Per-edge dual multipliers certifying ``max_{omega in box} |b_k^T Lbar omega| <= sin(gamma_d)``.

    Row ``k`` of ``lam_up``/``lam_lo`` bounds ``+b_k^T Lbar omega`` and row
    ``k`` of ``gam_up``/``gam_lo`` bounds ``-b_k^T Lbar omega``.
    """

    lam_up: cp.Variable
    lam_lo: cp.Variable
    gam_up: cp.Variable
    gam_lo: cp.Variable
    nu: cp.Variable
    eta: cp.Variable
    box: OmegaBox

    def dual_values(self, solution: conic.ConicSolution) -> np.ndarray:
        """Dual objective per edge and side, shape ``(K, 2)``."""
        v = solution.values
        up = v["lam_up"] @ self.box.upper - v["lam_lo"] @ self.box.lower
        dn = v["gam_up"] @ self.box.upper - v["gam_lo"] @ self.box.lower
        return np.column_stack([up, dn])


def _dual_block(prog: conic.ConicProgram, flows, box: OmegaBox, bound: float | None):
    K, n = flows.shape
    lam_up = prog.variable("lam_up", (K, n), nonneg=True)
    lam_lo = prog.variable("lam_lo", (K, n), nonneg=True)
    gam_up = prog.variable("gam_up", (K, n), nonneg=True)
    gam_lo = prog.variable("gam_lo", (K, n), nonneg=True)
    nu = prog.variable("nu", K)
    eta = prog.variable("eta", K)
    ones = np.ones((1, n))
    prog.add_eq("stationarity_up", lam_lo - lam_up + cp.reshape(nu, (K, 1), order="F") @ ones + flows)
    prog.add_eq("stationarity_dn", gam_lo - gam_up + cp.reshape(eta, (K, 1), order="F") @ ones - flows)
    block = RobustConstraintBlock(lam_up, lam_lo, gam_up, gam_lo, nu, eta, box)
    if bound is not None:
        prog.add_le("dual_value_up", lam_up @ box.upper - lam_lo @ box.lower, bound)
        prog.add_le("dual_value_dn", gam_up @ box.upper - gam_lo @ box.lower, bound)
    return block


def assemble_robust_constraints(prog: conic.ConicProgram, rows_B: np.ndarray, box: OmegaBox,
                                gamma_d: float, Lbar) -> RobustConstraintBlock:
    """Add the dual reformulation of the robust cohesiveness rows to ``prog``.

    ``rows_B`` is the ``n x K`` incidence of the constrained edges and
    ``Lbar`` any ``n x n`` matrix or affine expression standing in for the
    pseudoinverse (row ``k`` of the flows is ``b_k^T Lbar``).
    """
    return _dual_block(prog, rows_B.T @ Lbar, box, math.sin(gamma_d))


def robust_dual_values(rows: np.ndarray, box: OmegaBox) -> np.ndarray:
    """Minimal dual values for fixed rows ``a_k`` (shape ``K x n``), as ``(K, 2)``.

    By LP duality these equal ``max_{omega in box} +-a_k^T omega``.
    """
    prog = conic.ConicProgram()
    block = _dual_block(prog, np.asarray(rows, dtype=float), box, None)
    up = block.lam_up @ box.upper - block.lam_lo @ box.lower
    dn = block.gam_up @ box.upper - block.gam_lo @ box.lower
    prog.minimize(cp.sum(up) + cp.sum(dn))
    sol = conic.solve_or_raise(prog)
    if not sol.optimal:
        raise conic.NumericalFailure(f"dual LP status {sol.status.value}", sol.log)
    return block.dual_values(sol)


@dataclass
class WeightDesignProblem:
    """Edge-weight design on ``graph`` (the tunable edges).

    ``base``/``w_base`` describe fixed edges whose weights are not designed.
    ``row_mask`` selects which edges of ``base + graph`` (base first) carry a
    cohesiveness row; by default all of them do. ``prices`` give the linear
    (equivalently weighted-l1, since ``w >= 0``) cost. ``w_max=None`` leaves
    the weights unbounded above. ``beta=None`` drops the connectivity LMI.
    """

    graph: Graph
    omega: OmegaBox
    gamma_d: float
    prices: np.ndarray | None = None
    w_max: float | np.ndarray | None = None
    beta: float | None = DEFAULT_BETA
    alpha: float = 1.0
    base: Graph | None = None
    w_base: np.ndarray | None = None
    row_mask: np.ndarray | None = None

    def __post_init__(self):
        if not 0.0 <= self.gamma_d < np.pi / 2:
            raise ValueError("gamma_d must lie in [0, pi/2)")
        if self.omega.n != self.graph.n:
            raise ValueError("frequency box dimension does not match the graph")
        m = self.graph.m
        self.prices = np.ones(m) if self.prices is None else np.asarray(self.prices, dtype=float)
        if self.prices.shape != (m,) or np.any(self.prices < 0):
            raise ValueError("prices must be a nonnegative vector with one entry per edge")
        if self.w_max is not None and np.any(np.asarray(self.w_max) <= 0):
            raise ValueError("w_max must be positive")
        if self.beta is not None and self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.base is not None:
            if self.base.n != self.graph.n:
                raise ValueError("base graph has a different node count")
            self.w_base = (np.ones(self.base.m) if self.w_base is None
                           else np.asarray(self.w_base, dtype=float))

    @property
    def n(self) -> int:
        return self.graph.n

    def base_laplacian(self) -> np.ndarray:
        if self.base is None:
            return np.zeros((self.n, self.n))
        return self.base.laplacian(self.w_base)

    def all_edges_B(self) -> np.ndarray:
        if self.base is None:
            return self.graph.B
        return np.hstack([self.base.B, self.graph.B])

    def rows_B(self) -> np.ndarray:
        B = self.all_edges_B()
        if self.row_mask is None:
            return B
        return B[:, np.asarray(self.row_mask, dtype=bool)]

    def full_weights(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        return w if self.base is None else np.concatenate([self.w_base, w])

    def full_graph(self) -> Graph:
        return self.graph if self.base is None else self.base.union(self.graph)


@dataclass
class DesignResult:
    w: np.ndarray
    cost: float
    objective: float
    alpha: float
    tightness: float
    exact_bound: float  # worst case over the box of ||B_rows^T L^+ omega||_inf at w
    lambda2: float
    dual_values: np.ndarray | None  # (K, 2) minimal per-row dual objectives at w (robust form)
    Lbar: np.ndarray = field(repr=False)
    solution: conic.ConicSolution | None = field(default=None, repr=False)

    def to_json(self, problem: WeightDesignProblem) -> dict:
        out = {
            "w": self.w.tolist(),
            "edges": [list(e) for e in problem.graph.edges],
            "cost": self.cost,
            "objective": self.objective,
            "alpha": self.alpha,
            "tightness": self.tightness,
            "exact_bound": self.exact_bound,
            "sin_gamma_d": math.sin(problem.gamma_d),
            "lambda2": self.lambda2,
        }
        if self.dual_values is not None:
            out["dual_values"] = self.dual_values.tolist()
        return out


def tightness(Lbar: np.ndarray, L: np.ndarray) -> float:
    """||Lbar - (L + 11^T/n)^-1||_F / ||Lbar||_F."""
    n = L.shape[0]
    target = np.linalg.inv(L + np.full((n, n), 1.0 / n))
    return float(np.linalg.norm(Lbar - target) / np.linalg.norm(Lbar))


def _build(problem: WeightDesignProblem, robust: bool, alpha: float):
    n = problem.n
    prog = conic.ConicProgram()
    w = prog.variable("w", problem.graph.m, nonneg=True)
    Lbar = prog.variable("Lbar", (n, n), symmetric=True)
    B = problem.graph.B
    L = problem.base_laplacian() + B @ cp.diag(w) @ B.T
    J = np.full((n, n), 1.0 / n)
    eye = np.eye(n)
    prog.add_psd("schur", cp.bmat([[L + J, eye], [eye, Lbar]]))
    if problem.beta is not None:
        prog.add_psd("connectivity", L + problem.beta * J - problem.beta * eye)
    if problem.w_max is not None:
        prog.add_le("w_max", w, problem.w_max)
    rows_B = problem.rows_B()
    block = None
    if robust:
        block = assemble_robust_constraints(prog, rows_B, problem.omega, problem.gamma_d, Lbar)
    else:
        s = math.sin(problem.gamma_d)
        flows = rows_B.T @ (Lbar @ problem.omega.lower)
        prog.add_le("cohesive_up", flows, s)
        prog.add_le("cohesive_dn", -flows, s)
    prog.minimize(problem.prices @ w + alpha * cp.trace(Lbar))
    return prog, block


def _solve(problem: WeightDesignProblem, robust: bool, alpha: float | None = None,
           check_tightness: bool = True) -> DesignResult:
    alpha = problem.alpha if alpha is None else alpha
    if not robust and not problem.omega.is_point:
        raise ValueError("nominal design needs a point frequency vector")
    prog, block = _build(problem, robust, alpha)
    sol = conic.solve_or_raise(prog)
    if sol.status is conic.Status.INFEASIBLE:
        raise Infeasible("weight design is infeasible", sol.certificate)
    if not sol.optimal:
        raise conic.NumericalFailure(f"unexpected solver status {sol.status.value}", sol.log)
    w = np.maximum(sol["w"], 0.0)
    Lbar = 0.5 * (sol["Lbar"] + sol["Lbar"].T)
    w_full = problem.full_weights(w)
    L = problem.full_graph().laplacian(w_full)
    tight = tightness(Lbar, L)
    bundle = laplacian_bundle(problem.full_graph(), w_full)
    if bundle.connected:
        rows = problem.rows_B().T
        _, exact, _ = worst_case_omega(problem.full_graph(), w_full, problem.omega, rows=rows)
    else:
        exact = math.inf
    result = DesignResult(
        w=w,
        cost=float(problem.prices @ w),
        objective=float(sol.objective),
        alpha=alpha,
        tightness=tight,
        exact_bound=exact,
        lambda2=bundle.lambda2,
        dual_values=(robust_dual_values(problem.rows_B().T @ bundle.Lpinv, problem.omega)
                     if robust and bundle.connected else None),
        Lbar=Lbar,
        solution=sol,
    )
    log.debug("alpha=%g cost=%.6g tightness=%.3g exact=%.6g", alpha, result.cost, tight, exact)
    if check_tightness and tight > TIGHTNESS_TOL:
        raise AlphaTooSmall(f"relaxation not tight at alpha={alpha:g} (tightness {tight:.3g})",
                            tight, result)
    return result


def design_weights_robust(problem: WeightDesignProblem, alpha: float | None = None,
                          check_tightness: bool = True) -> DesignResult:
    """Robust design over the frequency box."""
    return _solve(problem, robust=True, alpha=alpha, check_tightness=check_tightness)


def design_weights_nominal(problem: WeightDesignProblem, alpha: float | None = None,
                           check_tightness: bool = True) -> DesignResult:
    """Design for a single frequency vector: ``||B^T Lbar omega||_inf <= sin(gamma_d)``."""
    return _solve(problem, robust=False, alpha=alpha, check_tightness=check_tightness)


def design_weights(problem: WeightDesignProblem, alpha: float | None = None,
                   check_tightness: bool = True) -> DesignResult:
    if problem.omega.is_point:
        return design_weights_nominal(problem, alpha, check_tightness)
    return design_weights_robust(problem, alpha, check_tightness)


def alpha_bisection(problem: WeightDesignProblem, alpha_lo: float, alpha_hi: float,
                    rel_gap: float = 0.1) -> tuple[float, DesignResult]:
    """Smallest alpha (to relative precision ``rel_gap``) giving a tight relaxation.

    ``alpha_hi`` is doubled until the relaxation is tight, up to ``ALPHA_CAP``.
    """
    if not 0 < alpha_lo < alpha_hi:
        raise ValueError("need 0 < alpha_lo < alpha_hi")

    def attempt(alpha):
        res = design_weights(problem, alpha, check_tightness=False)
        return res.tightness <= TIGHTNESS_TOL, res

    ok, res = attempt(alpha_lo)
    if ok:
        return alpha_lo, res
    ok_hi, res_hi = attempt(alpha_hi)
    while not ok_hi:
        if alpha_hi >= ALPHA_CAP:
            raise TightnessUnreachable(f"relaxation not tight for alpha up to {ALPHA_CAP:g}")
        alpha_lo, alpha_hi = alpha_hi, min(2.0 * alpha_hi, ALPHA_CAP)
        ok_hi, res_hi = attempt(alpha_hi)
    while alpha_hi / alpha_lo - 1.0 > rel_gap:
        mid = math.sqrt(alpha_lo * alpha_hi)
        ok, res = attempt(mid)
        if ok:
            alpha_hi, res_hi = mid, res
        else:
            alpha_lo = mid
    return alpha_hi, res_hi
