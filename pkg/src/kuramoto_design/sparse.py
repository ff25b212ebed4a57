"""Sparse edge addition by reweighted l1 minimization.

Each round solves the weighted-l1 weight design over all candidate edges,
with the cohesiveness rows restricted to the base edges and the candidates
selected in the previous round. Prices are then reset to ``1 / (eps + w)``
and the selection to the candidates with weight above ``eps``.
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import conic
from .graph import Graph, build_incidence, laplacian_bundle
from .weights import (DEFAULT_BETA, DesignResult, OmegaBox, WeightDesignProblem,
                      design_weights_nominal)

log = logging.getLogger(__name__)

POST_CHECK_TOL = 1e-5


@dataclass
class SparseDesignProblem:
    candidates: Graph
    omega: np.ndarray
    gamma_d: float
    base: Graph | None = None
    w_base: np.ndarray | None = None
    w_max: float | None = 10.0
    alpha: float = 2.0
    beta: float | None = DEFAULT_BETA
    epsilon: float = 0.01
    k_max: int = 10

    def __post_init__(self):
        self.omega = np.asarray(self.omega, dtype=float)
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        if self.k_max < 1:
            raise ValueError("k_max must be at least 1")
        if self.base is not None:
            if self.base.n != self.candidates.n:
                raise ValueError("base and candidate graphs have different node counts")
            base_pairs = {frozenset(e) for e in self.base.edges}
            if any(frozenset(e) in base_pairs for e in self.candidates.edges):
                raise ValueError("candidate edges must be disjoint from base edges")
            self.w_base = (np.ones(self.base.m) if self.w_base is None
                           else np.asarray(self.w_base, dtype=float))
        if abs(self.omega.sum()) > 1e-9 * max(1.0, np.abs(self.omega).max()) * self.omega.size:
            raise ValueError("natural frequencies must be centered (sum to zero)")

    @property
    def n(self) -> int:
        return self.candidates.n

    @property
    def m_base(self) -> int:
        return 0 if self.base is None else self.base.m


@dataclass
class SparseDesignState:
    iteration: int
    prices: np.ndarray
    w: np.ndarray
    selected: np.ndarray  # boolean mask of candidates carrying a row in this round
    support: np.ndarray  # candidates with w > epsilon after this round
    tightness: float
    exact_bound: float
    accepted: bool

    def to_json(self) -> dict:
        return {
            "iteration": self.iteration,
            "support_size": int(self.support.sum()),
            "support": [int(e) for e in np.nonzero(self.support)[0]],
            "tightness": self.tightness,
            "exact_bound": self.exact_bound,
            "accepted": self.accepted,
        }


@dataclass
class SparseDesignResult:
    w: np.ndarray  # final candidate weights, entries <= epsilon zeroed
    support: np.ndarray  # indices of the selected candidate edges
    history: list[SparseDesignState]
    exact_bound: float
    feasible: bool
    rounds_completed: int
    last_design: DesignResult | None = field(default=None, repr=False)

    def density(self, problem: SparseDesignProblem) -> float:
        return self.support.size / problem.candidates.m

    def selected_graph(self, problem: SparseDesignProblem) -> tuple[Graph, np.ndarray]:
        """Graph of base plus selected candidates with its weight vector."""
        edges = [problem.candidates.edges[e] for e in self.support]
        w = self.w[self.support]
        if problem.base is not None:
            edges = list(problem.base.edges) + edges
            w = np.concatenate([problem.w_base, w])
        return build_incidence(edges, problem.n), w

    def to_json(self, problem: SparseDesignProblem) -> dict:
        return {
            "feasible": self.feasible,
            "rounds_completed": self.rounds_completed,
            "exact_bound": self.exact_bound,
            "sin_gamma_d": math.sin(problem.gamma_d),
            "support_size": int(self.support.size),
            "density": self.density(problem),
            "edges": [list(problem.candidates.edges[e]) for e in self.support],
            "w": [float(self.w[e]) for e in self.support],
            "history": [s.to_json() for s in self.history],
        }


def selected_bound(problem: SparseDesignProblem, w, rows_mask) -> float:
    """Exact ``||B_sel^T L^+ omega||_inf`` with L built from all weights ``w``."""
    graph = problem.candidates if problem.base is None else problem.base.union(problem.candidates)
    w_full = w if problem.base is None else np.concatenate([problem.w_base, w])
    bundle = laplacian_bundle(graph, w_full)
    if not bundle.connected:
        return math.inf
    mask = np.concatenate([np.ones(problem.m_base, dtype=bool), np.asarray(rows_mask, dtype=bool)])
    flows = graph.B[:, mask].T @ (bundle.Lpinv @ problem.omega)
    return float(np.max(np.abs(flows))) if flows.size else 0.0


def _round_problem(problem: SparseDesignProblem, prices, selected) -> WeightDesignProblem:
    row_mask = np.concatenate([np.ones(problem.m_base, dtype=bool), selected])
    return WeightDesignProblem(
        graph=problem.candidates,
        omega=OmegaBox.point(problem.omega),
        gamma_d=problem.gamma_d,
        prices=prices,
        w_max=problem.w_max,
        beta=problem.beta,
        alpha=problem.alpha,
        base=problem.base,
        w_base=problem.w_base,
        row_mask=row_mask,
    )


def reweighted_l1(problem: SparseDesignProblem, on_round=None) -> SparseDesignResult:
    """Run the reweighted l1 rounds and return the final sparse design.

    A round is accepted when the exact bound over its selected edges meets
    ``sin(gamma_d)`` (up to ``POST_CHECK_TOL``). If a round is infeasible or
    fails the post-check, the last accepted round is returned with a warning.
    """
    m_c = problem.candidates.m
    s = math.sin(problem.gamma_d)
    eps = problem.epsilon
    prices = np.ones(m_c)
    selected = np.ones(m_c, dtype=bool)
    history: list[SparseDesignState] = []
    best_w, best_design = None, None
    for k in range(1, problem.k_max + 1):
        try:
            res = design_weights_nominal(_round_problem(problem, prices, selected),
                                         check_tightness=False)
        except (conic.Infeasible, conic.NumericalFailure) as exc:
            warnings.warn(f"round {k} failed ({exc}); keeping round {k - 1}", RuntimeWarning)
            break
        w = res.w
        bound = selected_bound(problem, w, w > eps)
        accepted = bound <= s + POST_CHECK_TOL
        state = SparseDesignState(
            iteration=k, prices=prices.copy(), w=w.copy(), selected=selected.copy(),
            support=w > eps, tightness=res.tightness, exact_bound=bound, accepted=accepted,
        )
        history.append(state)
        log.info("round %d: support %d, bound %.6f, tightness %.3g",
                 k, int(state.support.sum()), bound, res.tightness)
        if on_round is not None:
            on_round(state)
        if not accepted:
            warnings.warn(f"round {k} fails the exact cohesiveness check ({bound:.6g} > {s:.6g}); "
                          f"keeping round {k - 1}", RuntimeWarning)
            break
        best_w, best_design = w, res
        prices = 1.0 / (eps + w)
        selected = w > eps

    if best_w is None:
        return SparseDesignResult(w=np.zeros(m_c), support=np.array([], dtype=int), history=history,
                                  exact_bound=math.inf, feasible=False, rounds_completed=0)
    w_final = np.where(best_w > eps, best_w, 0.0)
    support = np.nonzero(w_final)[0]
    bound = selected_bound(problem, w_final, w_final > 0)
    feasible = bound <= s + POST_CHECK_TOL
    if not feasible:
        warnings.warn(f"zeroing weights below epsilon breaks the bound ({bound:.6g} > {s:.6g})",
                      RuntimeWarning)
    return SparseDesignResult(
        w=w_final, support=support, history=history, exact_bound=bound, feasible=feasible,
        rounds_completed=sum(st.accepted for st in history), last_design=best_design,
    )


def dump_sparsity(history: list[SparseDesignState], problem: SparseDesignProblem, path) -> None:
    """Write the per-round adjacency support pattern as JSON."""
    rounds = []
    for st in history:
        rounds.append({
            "iteration": st.iteration,
            "edges": [list(problem.candidates.edges[e]) for e in np.nonzero(st.support)[0]],
        })
    Path(path).write_text(json.dumps({"n": problem.n, "rounds": rounds}, indent=2) + "\n")
