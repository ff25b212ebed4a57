"""Conic program container and certified solve.

Programs are modelled with cvxpy. :func:`solve` canonicalizes to the
solver's standard form, calls the solver directly so that the raw primal/dual
objectives and residuals are available for certification, then maps the
solution back onto the cvxpy variables.
"""

from __future__ import annotations

import enum
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import cvxpy as cp
import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)

FEAS_TOL = 1e-8
GAP_TOL = 1e-7
MAX_ITER = 200
# CVXOPT is only a last resort; beyond this many variables it is too slow
CVXOPT_MAX_VARIABLES = 3000


class Status(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    NUMERICAL_FAILURE = "NumericalFailure"


class Infeasible(RuntimeError):
    """The solver certified infeasibility; ``certificate`` is its dual ray."""

    def __init__(self, message, certificate=None):
        super().__init__(message)
        self.certificate = certificate


class NumericalFailure(RuntimeError):
    def __init__(self, message, log_lines=()):
        super().__init__(message)
        self.log = list(log_lines)


@dataclass
class ConicProgram:
    """Linear objective with equality, inequality and PSD constraint groups.

    Constraints are stored under string labels so that callers can look up
    their dual values after the solve.
    """

    variables: dict[str, cp.Variable] = field(default_factory=dict)
    objective: cp.Expression | None = None
    equalities: dict[str, cp.Constraint] = field(default_factory=dict)
    inequalities: dict[str, cp.Constraint] = field(default_factory=dict)
    psd_blocks: dict[str, cp.Constraint] = field(default_factory=dict)

    def variable(self, name, shape=(), **kwargs) -> cp.Variable:
        if name in self.variables:
            raise ValueError(f"variable {name!r} already declared")
        var = cp.Variable(shape, name=name, **kwargs)
        self.variables[name] = var
        return var

    def minimize(self, expr) -> None:
        self.objective = expr

    def add_eq(self, label, lhs, rhs=0.0) -> None:
        self.equalities[self._fresh(label)] = lhs == rhs

    def add_le(self, label, lhs, rhs=0.0) -> None:
        self.inequalities[self._fresh(label)] = lhs <= rhs

    def add_psd(self, label, block) -> None:
        # symmetrize explicitly so the cone constraint is well-posed
        self.psd_blocks[self._fresh(label)] = 0.5 * (block + block.T) >> 0

    def _fresh(self, label):
        if label in self.equalities or label in self.inequalities or label in self.psd_blocks:
            raise ValueError(f"constraint label {label!r} already used")
        return label

    def constraints(self) -> list:
        return [*self.equalities.values(), *self.inequalities.values(), *self.psd_blocks.values()]

    def problem(self) -> cp.Problem:
        if self.objective is None:
            raise ValueError("program has no objective")
        declared = {v.id for v in self.variables.values()}
        prob = cp.Problem(cp.Minimize(self.objective), self.constraints())
        missing = [v.name() for v in prob.variables() if v.id not in declared]
        if missing:
            raise ValueError(f"undeclared variables referenced: {missing}")
        return prob

    def dump(self, path) -> None:
        """Write the canonical standard form as plain-text triplets.

        Sections: ``variables`` (name, offset, size), ``c`` (index value),
        ``A`` (row col value), ``b`` (row value), ``cones`` (kind size).
        PSD cones are in Clarabel's scaled lower-triangular vectorization.
        """
        prob = self.problem()
        data, _, _ = prob.get_problem_data(cp.CLARABEL)
        A = sp.coo_matrix(data["A"])
        lines = ["variables"]
        offset = 0
        for var in prob.variables():
            lines.append(f"{var.name()} {offset} {var.size}")
            offset += var.size
        lines.append("c")
        lines += [f"{i} {v:.17g}" for i, v in enumerate(data["c"]) if v != 0]
        lines.append("A")
        lines += [f"{r} {c} {v:.17g}" for r, c, v in zip(A.row, A.col, A.data)]
        lines.append("b")
        lines += [f"{i} {v:.17g}" for i, v in enumerate(data["b"]) if v != 0]
        dims = data["dims"]
        lines.append("cones")
        lines.append(f"zero {dims.zero}")
        lines.append(f"nonneg {dims.nonneg}")
        lines += [f"psd {k}" for k in dims.psd]
        Path(path).write_text("\n".join(lines) + "\n")


@dataclass
class ConicSolution:
    status: Status
    objective: float | None
    dual_objective: float | None
    gap: float | None
    primal_residual: float | None
    dual_residual: float | None
    iterations: int
    values: dict[str, np.ndarray]
    duals: dict[str, np.ndarray]
    solver_status: str = ""
    log: list[str] = field(default_factory=list)
    certificate: np.ndarray | None = None  # raw dual ray when infeasible

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL

    def __getitem__(self, name) -> np.ndarray:
        return self.values[name]


_CLARABEL_STATUS = {
    "Solved": Status.OPTIMAL,
    "PrimalInfeasible": Status.INFEASIBLE,
    "DualInfeasible": Status.UNBOUNDED,
    "AlmostSolved": Status.NUMERICAL_FAILURE,
    "AlmostPrimalInfeasible": Status.INFEASIBLE,
    "AlmostDualInfeasible": Status.UNBOUNDED,
}

_CVXOPT_STATUS = {
    "optimal": Status.OPTIMAL,
    "primal infeasible": Status.INFEASIBLE,
    "dual infeasible": Status.UNBOUNDED,
}


@dataclass
class _RawRun:
    solver: str
    status: Status
    solver_status: str
    pobj: float
    dobj: float
    r_prim: float
    r_dual: float
    iterations: int
    raw: object
    certificate: np.ndarray | None


def _run_clarabel(prob, data, chain, feas_tol, gap_tol, max_iter, verbose, **extra) -> _RawRun:
    opts = {
        "max_iter": max_iter,
        # solve tighter than the certificate so the certificate has headroom
        "tol_feas": feas_tol * 1e-2,
        "tol_gap_abs": gap_tol * 1e-2,
        "tol_gap_rel": gap_tol * 1e-2,
        "tol_ktratio": 1e-8,
        **extra,
    }
    raw = chain.solver.solve_via_data(data, warm_start=False, verbose=verbose, solver_opts=opts)
    status = _CLARABEL_STATUS.get(str(raw.status), Status.NUMERICAL_FAILURE)
    return _RawRun(
        solver="clarabel", status=status, solver_status=str(raw.status),
        pobj=float(raw.obj_val), dobj=float(raw.obj_val_dual),
        r_prim=float(raw.r_prim), r_dual=float(raw.r_dual), iterations=int(raw.iterations),
        raw=raw, certificate=np.array(raw.z) if status is Status.INFEASIBLE else None,
    )


def _run_cvxopt(prob, data, chain, feas_tol, gap_tol, max_iter, verbose, **extra) -> _RawRun:
    import cvxopt.solvers

    # cvxpy keeps only part of the conelp output; record the full dictionary
    captured = {}
    conelp = cvxopt.solvers.conelp

    def recording_conelp(*args, **kwargs):
        out = conelp(*args, **kwargs)
        captured.update(out)
        return out

    opts = {"max_iters": max_iter, "feastol": feas_tol * 1e-1,
            "abstol": gap_tol * 1e-2, "reltol": gap_tol * 1e-2}
    cvxopt.solvers.conelp = recording_conelp
    try:
        raw = chain.solver.solve_via_data(data, warm_start=False, verbose=verbose, solver_opts=opts)
    finally:
        cvxopt.solvers.conelp = conelp
    solver_status = str(captured.get("status", "unknown"))
    status = _CVXOPT_STATUS.get(solver_status, Status.NUMERICAL_FAILURE)

    def num(key):
        v = captured.get(key)
        return float(v) if v is not None else float("nan")

    cert = None
    if status is Status.INFEASIBLE and captured.get("z") is not None:
        cert = np.array(captured["z"]).ravel()
    return _RawRun(
        solver="cvxopt", status=status, solver_status=solver_status,
        pobj=num("primal objective"), dobj=num("dual objective"),
        r_prim=num("primal infeasibility"), r_dual=num("dual infeasibility"),
        iterations=int(captured.get("iterations", 0)), raw=raw, certificate=cert,
    )


def _certify(run: _RawRun, feas_tol, gap_tol) -> tuple[Status, float | None]:
    gap = None
    if np.isfinite(run.pobj) and np.isfinite(run.dobj):
        gap = abs(run.pobj - run.dobj) / max(1.0, abs(run.pobj), abs(run.dobj))
    certified = gap is not None and gap <= gap_tol and run.r_prim <= feas_tol
    status = run.status
    if status is Status.OPTIMAL and not certified:
        status = Status.NUMERICAL_FAILURE
    elif run.solver_status == "AlmostSolved" and certified:
        # accept when the certificate still holds at the requested tolerances
        status = Status.OPTIMAL
    return status, gap


def solve(
    program: ConicProgram,
    feas_tol: float = FEAS_TOL,
    gap_tol: float = GAP_TOL,
    max_iter: int = MAX_ITER,
    verbose: bool = False,
) -> ConicSolution:
    """Solve ``program`` and certify the result.

    An ``Optimal`` status is only reported when the solver's primal residual
    is at most ``feas_tol`` and the relative primal/dual objective gap is at
    most ``gap_tol``; otherwise the status is ``NumericalFailure``. Clarabel
    runs first, then Clarabel with shorter steps, then (for small problems)
    CVXOPT, stopping at the first run whose result can be certified.
    """
    prob = program.problem()
    attempts = [
        (cp.CLARABEL, _run_clarabel, {}),
        # shorter steps often get past the stalls Clarabel hits on degenerate SDPs
        (cp.CLARABEL, _run_clarabel, {"max_step_fraction": 0.9}),
    ]
    if prob.size_metrics.num_scalar_variables <= CVXOPT_MAX_VARIABLES:
        attempts.append((cp.CVXOPT, _run_cvxopt, {}))
    log_lines = []
    for solver, runner, extra in attempts:
        data, chain, inverse_data = prob.get_problem_data(solver)
        run = runner(prob, data, chain, feas_tol, gap_tol, max_iter, verbose, **extra)
        status, gap = _certify(run, feas_tol, gap_tol)
        log_lines += [
            f"{run.solver}{' ' + str(extra) if extra else ''} status {run.solver_status}",
            f"iterations {run.iterations}",
            f"primal objective {run.pobj:.12g}",
            f"dual objective {run.dobj:.12g}",
            f"primal residual {run.r_prim:.3g}",
            f"dual residual {run.r_dual:.3g}",
        ]
        if status is not Status.NUMERICAL_FAILURE:
            break
    for line in log_lines:
        log.debug(line)

    values, duals = {}, {}
    objective = dobj = None
    if status is Status.OPTIMAL:
        with warnings.catch_warnings():
            # cvxpy flags near-solved runs; the certificate above has already vetted them
            warnings.simplefilter("ignore", UserWarning)
            prob.unpack_results(run.raw, chain, inverse_data)
        objective = float(prob.value)
        values = {k: np.array(v.value) for k, v in program.variables.items()}
        for group in (program.equalities, program.inequalities, program.psd_blocks):
            for label, con in group.items():
                duals[label] = np.array(con.dual_value)
        # the canonical objective differs from the user objective by a constant
        dobj = run.dobj + (objective - run.pobj)
    return ConicSolution(
        status=status,
        objective=objective,
        dual_objective=dobj,
        gap=gap,
        primal_residual=run.r_prim,
        dual_residual=run.r_dual,
        iterations=run.iterations,
        values=values,
        duals=duals,
        solver_status=f"{run.solver}:{run.solver_status}",
        log=log_lines,
        certificate=run.certificate if status is Status.INFEASIBLE else None,
    )


def solve_or_raise(program: ConicProgram, **kwargs) -> ConicSolution:
    sol = solve(program, **kwargs)
    if sol.status is Status.NUMERICAL_FAILURE:
        raise NumericalFailure(f"conic solve failed ({sol.solver_status})", sol.log)
    return sol


def inverse_by_sdp(A: np.ndarray, **kwargs) -> np.ndarray:
    """argmin tr(X) s.t. [[A, I], [I, X]] >= 0, which is A^-1 for A > 0."""
    n = A.shape[0]
    prog = ConicProgram()
    X = prog.variable("X", (n, n), symmetric=True)
    eye = np.eye(n)
    prog.add_psd("schur", cp.bmat([[A, eye], [eye, X]]))
    prog.minimize(cp.trace(X))
    sol = solve_or_raise(prog, **kwargs)
    if not sol.optimal:
        raise NumericalFailure(f"unexpected status {sol.status}")
    return sol["X"]
