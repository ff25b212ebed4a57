"""Minimum-cost natural-frequency tuning under the cohesiveness constraint."""

from __future__ import annotations

from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

from . import conic
from .conic import Infeasible
from .graph import Graph, GraphError, laplacian_bundle


@dataclass
class FreqDesignProblem:
    graph: Graph
    w0: np.ndarray
    gamma_d: float
    omega_s: float
    lower: np.ndarray
    upper: np.ndarray
    nominal: np.ndarray | None = None  # omega_0; defaults to omega_s * 1
    cost: str = "l1"  # "l1" or "quadratic"
    prices: np.ndarray | None = None  # per-node l1 prices, default 1

    def __post_init__(self):
        n = self.graph.n
        self.w0 = np.asarray(self.w0, dtype=float)
        self.lower = np.broadcast_to(np.asarray(self.lower, dtype=float), (n,)).copy()
        self.upper = np.broadcast_to(np.asarray(self.upper, dtype=float), (n,)).copy()
        self.nominal = (np.full(n, float(self.omega_s)) if self.nominal is None
                        else np.asarray(self.nominal, dtype=float))
        self.prices = np.ones(n) if self.prices is None else np.asarray(self.prices, dtype=float)
        if not 0.0 <= self.gamma_d < np.pi / 2:
            raise ValueError("gamma_d must lie in [0, pi/2)")
        if np.any(self.lower > self.upper):
            raise ValueError("empty frequency box")
        if np.any(self.prices < 0):
            raise ValueError("prices must be nonnegative")
        if self.cost not in ("l1", "quadratic"):
            raise ValueError(f"unknown cost {self.cost!r}")


@dataclass
class FreqDesignResult:
    omega_star: np.ndarray
    cost_value: float
    active_edges: list[int]
    status: str
    bound_sin: float
    solution: conic.ConicSolution | None = field(default=None, repr=False)

    def to_json(self, graph: Graph) -> dict:
        return {
            "status": self.status,
            "omega_star": self.omega_star.tolist(),
            "cost": self.cost_value,
            "bound_sin": self.bound_sin,
            "active_edges": [list(graph.edges[e]) for e in self.active_edges],
        }


def flow_operator(graph: Graph, w0) -> np.ndarray:
    """The m x n matrix B^T L^+ mapping frequencies to edge flows."""
    bundle = laplacian_bundle(graph, w0)
    if not bundle.connected:
        raise GraphError("graph with weights w0 is disconnected")
    return graph.B.T @ bundle.Lpinv


def build_program(problem: FreqDesignProblem, rows: np.ndarray) -> conic.ConicProgram:
    n = problem.graph.n
    s = np.sin(problem.gamma_d)
    prog = conic.ConicProgram()
    omega = prog.variable("omega", n)
    prog.add_le("flow_upper", rows @ omega, s)
    prog.add_le("flow_lower", -(rows @ omega), s)
    prog.add_eq("mean", cp.sum(omega) / n, problem.omega_s)
    prog.add_le("box_upper", omega, problem.upper)
    prog.add_le("box_lower", problem.lower, omega)
    dev = omega - problem.nominal
    if problem.cost == "l1":
        t = prog.variable("t", n)
        prog.add_le("epi_pos", cp.multiply(problem.prices, dev), t)
        prog.add_le("epi_neg", -cp.multiply(problem.prices, dev), t)
        prog.minimize(cp.sum(t))
    else:
        prog.minimize(cp.sum_squares(dev))
    return prog


def design_frequencies(problem: FreqDesignProblem, active_tol: float = 1e-6) -> FreqDesignResult:
    rows = flow_operator(problem.graph, problem.w0)
    sol = conic.solve_or_raise(build_program(problem, rows))
    if sol.status is conic.Status.INFEASIBLE:
        raise Infeasible("no frequencies satisfy the cohesiveness, mean and box constraints",
                         sol.certificate)
    if not sol.optimal:
        raise conic.NumericalFailure(f"unexpected solver status {sol.status.value}", sol.log)
    omega = sol["omega"]
    flows = rows @ omega
    s = np.sin(problem.gamma_d)
    active = [int(e) for e in np.nonzero(np.abs(flows) >= s - active_tol)[0]]
    return FreqDesignResult(
        omega_star=omega,
        cost_value=float(sol.objective),
        active_edges=active,
        status="optimal",
        bound_sin=float(np.max(np.abs(flows))) if flows.size else 0.0,
        solution=sol,
    )
