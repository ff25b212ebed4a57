"""Command-line interface.

Every subcommand reads a JSON config (``--config``), writes its artifacts to
``--out`` and exits with 0 (success), 1 (solved but infeasible or not
synchronized), 2 (bad input) or 3 (numerical failure).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import conic, experiments
from .dynamics import (DEFAULT_HORIZON, DEFAULT_STEP, DEFAULT_SYNC_TOL, DEFAULT_TAIL,
                       KuramotoSystem, center_frequencies, simulate)
from .fixed_point import (NoFixedPointFound, NotFound, cohesiveness_bound, lemma_one_solve_y,
                          solve_fixed_point, stability_check)
from .frequency import FreqDesignProblem, design_frequencies
from .graph import GraphError, build_incidence, complete_graph, graph_to_json, load_graph_json
from .sparse import SparseDesignProblem, dump_sparsity, reweighted_l1
from .weights import (AlphaTooSmall, OmegaBox, TightnessUnreachable, WeightDesignProblem,
                      alpha_bisection, design_weights, worst_case_omega)

log = logging.getLogger(__name__)

EXIT_OK, EXIT_INFEASIBLE, EXIT_INPUT, EXIT_NUMERICAL = 0, 1, 2, 3


class InputError(Exception):
    pass


# ---------------------------------------------------------------- schemas

_NUM = {"type": "number"}
_VEC = {"type": "array", "items": _NUM, "minItems": 1}
_EDGE = {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2}
_GRAPH_OBJ = {
    "type": "object",
    "required": ["n", "edges"],
    "properties": {
        "n": {"type": "integer", "minimum": 1},
        "edges": {"type": "array", "items": {
            "type": "object",
            "required": ["source", "sink"],
            "properties": {"source": {"type": "integer"}, "sink": {"type": "integer"},
                           "weight": {"type": "number", "minimum": 0}},
        }},
    },
}
_GRAPH = {"oneOf": [{"type": "string"}, _GRAPH_OBJ]}
_SIM = {
    "T": {"type": "number", "exclusiveMinimum": 0},
    "h": {"type": "number", "exclusiveMinimum": 0},
    "theta0": _VEC,
    "tail_fraction": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
    "tol": {"type": "number", "exclusiveMinimum": 0},
}
_GAMMA = {"type": "number", "minimum": 0, "exclusiveMaximum": math.pi / 2}
_BOX = {"type": "object", "required": ["lower", "upper"],
        "properties": {"lower": {"oneOf": [_VEC, _NUM]}, "upper": {"oneOf": [_VEC, _NUM]},
                       "center": {"type": "boolean"}}}


def _schema(required, **props):
    return {"type": "object", "required": required, "properties": props}


SCHEMAS = {
    "bound": _schema(["graph", "omega"], graph=_GRAPH, omega=_VEC, simulate={"type": "boolean"},
                     **_SIM),
    "simulate": _schema(["graph", "omega"], graph=_GRAPH, omega=_VEC, **_SIM),
    "fixed-point": _schema(["graph", "omega"], graph=_GRAPH, omega=_VEC, theta_init=_VEC,
                           lemma_one_r={"type": "array", "items": _NUM}),
    "freq-design": _schema(
        ["graph", "gamma_d", "omega_s", "lower", "upper"], graph=_GRAPH, gamma_d=_GAMMA,
        omega_s=_NUM, lower={"oneOf": [_VEC, _NUM]}, upper={"oneOf": [_VEC, _NUM]},
        nominal=_VEC, cost={"enum": ["l1", "quadratic"]}, prices=_VEC,
        simulate={"type": "boolean"}, **_SIM),
    "weight-design": _schema(
        ["graph", "gamma_d"], graph=_GRAPH, gamma_d=_GAMMA, omega=_VEC, box=_BOX, prices=_VEC,
        w_max={"oneOf": [_NUM, {"type": "null"}]}, beta={"oneOf": [_NUM, {"type": "null"}]},
        alpha={"oneOf": [_NUM, {"const": "auto"}]}, base=_GRAPH,
        simulate={"type": "boolean"}, **_SIM),
    "sparse-design": _schema(
        ["omega", "gamma_d"], candidates=_GRAPH, complete={"type": "integer", "minimum": 2},
        base=_GRAPH, omega=_VEC, gamma_d=_GAMMA, alpha=_NUM, epsilon=_NUM,
        beta={"oneOf": [_NUM, {"type": "null"}]}, w_max={"oneOf": [_NUM, {"type": "null"}]},
        k_max={"type": "integer", "minimum": 1}, simulate={"type": "boolean"}, **_SIM),
    "braess-scan": _schema(
        ["graph", "omega", "edge", "grid"], graph=_GRAPH, omega=_VEC, edge=_EDGE,
        grid={"type": "array", "prefixItems": [_NUM, _NUM, {"type": "integer", "minimum": 2}],
              "minItems": 3, "maxItems": 3},
        simulate={"type": "boolean"}),
}
for _s in SCHEMAS.values():
    _s["additionalProperties"] = False


# ---------------------------------------------------------------- helpers


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _load_config(path: Path | None, command: str) -> tuple[dict, Path]:
    if path is None:
        raise InputError(f"{command} needs --config")
    try:
        config = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read config: {exc}") from exc
    try:
        jsonschema.validate(config, SCHEMAS[command])
    except jsonschema.ValidationError as exc:
        raise InputError(f"config does not match the {command} schema: {exc.message}") from exc
    return config, Path(path).resolve().parent


def _graph(spec, root: Path):
    if isinstance(spec, str):
        p = Path(spec)
        p = p if p.is_absolute() else root / p
        try:
            return load_graph_json(p)
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read graph {p}: {exc}") from exc
    return load_graph_json(spec)


def _vector(values, n, name):
    v = np.broadcast_to(np.asarray(values, dtype=float), (n,)).copy() if np.ndim(values) == 0 \
        else np.asarray(values, dtype=float)
    if v.shape != (n,):
        raise InputError(f"{name} must have {n} entries")
    return v


def _sim_kwargs(config) -> dict:
    return {
        "T": config.get("T", DEFAULT_HORIZON),
        "h": config.get("h", DEFAULT_STEP),
        "theta0": config.get("theta0"),
        "tail_fraction": config.get("tail_fraction", DEFAULT_TAIL),
        "tol": config.get("tol", DEFAULT_SYNC_TOL),
    }


def _run_simulation(system: KuramotoSystem, config, out: Path, name: str) -> dict:
    traj, status, phi = simulate(system, **_sim_kwargs(config))
    traj.to_csv(out / f"{name}.csv")
    return {"synchronized": status.synchronized, "omega_s": status.omega_s,
            "residual": status.residual, "phi": phi}


# ---------------------------------------------------------------- commands


def cmd_bound(config, root, out, args) -> int:
    graph, w = _graph(config["graph"], root)
    omega = _vector(config["omega"], graph.n, "omega")
    centered, omega_s = center_frequencies(KuramotoSystem(graph, w, omega))
    report = cohesiveness_bound(centered)
    result = {**report.to_json(), "omega_s": omega_s}
    if config.get("simulate"):
        sim = _run_simulation(KuramotoSystem(graph, w, omega), config, out, "trajectory")
        result["simulated_phi"] = sim["phi"]
        result["simulation"] = sim
    _write_json(out / "report.json", result)
    return EXIT_OK if report.feasible else EXIT_INFEASIBLE


def cmd_simulate(config, root, out, args) -> int:
    graph, w = _graph(config["graph"], root)
    omega = _vector(config["omega"], graph.n, "omega")
    sim = _run_simulation(KuramotoSystem(graph, w, omega), config, out, "trajectory")
    _write_json(out / "sync.json", sim)
    return EXIT_OK if sim["synchronized"] else EXIT_INFEASIBLE


def cmd_fixed_point(config, root, out, args) -> int:
    graph, w = _graph(config["graph"], root)
    omega = _vector(config["omega"], graph.n, "omega")
    system, omega_s = center_frequencies(KuramotoSystem(graph, w, omega))
    result = {"omega_s": omega_s, "bound": cohesiveness_bound(system).to_json()}
    try:
        fp = solve_fixed_point(system, config.get("theta_init"))
    except NoFixedPointFound as exc:
        result.update(found=False, message=str(exc))
        _write_json(out / "fixed_point.json", result)
        return EXIT_INFEASIBLE
    verdict = stability_check(system, fp.theta_star)
    result.update(found=True, theta_star=fp.theta_star, residual=fp.residual,
                  cohesiveness=fp.cohesiveness, iterations=fp.iterations,
                  stable_sufficient=verdict.sufficient, stable_spectral=verdict.spectral,
                  jacobian_eigenvalues=verdict.eigenvalues)
    family = []
    for r in config.get("lemma_one_r", []):
        try:
            sol = lemma_one_solve_y(system, r)
            family.append({"r": r, "found": True, "y": sol.y, "combined": sol.combined,
                           "cycle_residual": sol.cycle_residual})
        except (NotFound, GraphError) as exc:
            family.append({"r": r, "found": False, "message": str(exc)})
    if family:
        result["lemma_one"] = family
    _write_json(out / "fixed_point.json", result)
    return EXIT_OK


def cmd_freq_design(config, root, out, args) -> int:
    graph, w0 = _graph(config["graph"], root)
    n = graph.n
    problem = FreqDesignProblem(
        graph=graph, w0=w0, gamma_d=config["gamma_d"], omega_s=config["omega_s"],
        lower=_vector(config["lower"], n, "lower"), upper=_vector(config["upper"], n, "upper"),
        nominal=config.get("nominal"), cost=config.get("cost", "l1"), prices=config.get("prices"),
    )
    try:
        result = design_frequencies(problem)
    except conic.Infeasible as exc:
        _write_json(out / "result.json", {"status": "infeasible", "message": str(exc)})
        return EXIT_INFEASIBLE
    payload = result.to_json(graph)
    centered, _ = center_frequencies(KuramotoSystem(graph, w0, result.omega_star))
    check = cohesiveness_bound(centered)
    payload["exact_bound"] = check.bound_sin
    ok = check.bound_sin <= math.sin(problem.gamma_d) + 1e-6
    if config.get("simulate"):
        sim = _run_simulation(KuramotoSystem(graph, w0, result.omega_star), config, out, "trajectory")
        payload["simulation"] = sim
        ok = ok and sim["synchronized"] and sim["phi"] <= problem.gamma_d + 1e-3
    payload["validated"] = ok
    _write_json(out / "result.json", payload)
    return EXIT_OK if ok else EXIT_INFEASIBLE


def _alpha_mode(config, args):
    alpha = args.alpha if args.alpha is not None else config.get("alpha", 1.0)
    if alpha == "auto":
        return None
    try:
        alpha = float(alpha)
    except ValueError as exc:
        raise InputError(f"--alpha must be a number or 'auto', got {alpha!r}") from exc
    if alpha <= 0:
        raise InputError("alpha must be positive")
    return alpha


def cmd_weight_design(config, root, out, args) -> int:
    graph, _ = _graph(config["graph"], root)
    n = graph.n
    if ("omega" in config) == ("box" in config):
        raise InputError("give exactly one of omega or box")
    if "omega" in config:
        box = OmegaBox.point(_vector(config["omega"], n, "omega"))
    else:
        spec = config["box"]
        lo, hi = _vector(spec["lower"], n, "box.lower"), _vector(spec["upper"], n, "box.upper")
        box = OmegaBox.centered(lo, hi) if spec.get("center", True) else OmegaBox(lo, hi)
    base, w_base = (None, None) if "base" not in config else _graph(config["base"], root)
    problem = WeightDesignProblem(
        graph=graph, omega=box, gamma_d=config["gamma_d"], prices=config.get("prices"),
        w_max=config.get("w_max"), beta=config.get("beta", 1e-4), base=base, w_base=w_base,
    )
    alpha = _alpha_mode(config, args)
    try:
        if alpha is None:
            alpha, result = alpha_bisection(problem, 1e-2, 1.0)
        else:
            result = design_weights(problem, alpha)
    except conic.Infeasible as exc:
        _write_json(out / "result.json", {"status": "infeasible", "message": str(exc)})
        return EXIT_INFEASIBLE
    payload = {"status": "optimal", **result.to_json(problem)}
    ok = result.exact_bound <= math.sin(problem.gamma_d) + 1e-5
    if config.get("simulate"):
        full, w_full = problem.full_graph(), problem.full_weights(result.w)
        omega, value, _ = worst_case_omega(full, w_full, box, rows=problem.rows_B().T)
        sim = _run_simulation(KuramotoSystem(full, w_full, omega), config, out, "trajectory")
        payload.update(worst_case_omega=omega, worst_case_value=value, simulation=sim)
        ok = ok and sim["synchronized"] and sim["phi"] <= problem.gamma_d + 1e-3
    payload["validated"] = ok
    _write_json(out / "result.json", payload)
    return EXIT_OK if ok else EXIT_INFEASIBLE


def cmd_sparse_design(config, root, out, args) -> int:
    if ("candidates" in config) == ("complete" in config):
        raise InputError("give exactly one of candidates or complete")
    cand = complete_graph(config["complete"]) if "complete" in config \
        else _graph(config["candidates"], root)[0]
    base, w_base = (None, None) if "base" not in config else _graph(config["base"], root)
    omega = _vector(config["omega"], cand.n, "omega")
    alpha = _alpha_mode({"alpha": config.get("alpha", 2.0)}, args)
    if alpha is None:
        raise InputError("sparse-design needs a numeric alpha")
    problem = SparseDesignProblem(
        candidates=cand, omega=omega, gamma_d=config["gamma_d"], base=base, w_base=w_base,
        w_max=config.get("w_max", 10.0), alpha=alpha, beta=config.get("beta", 1e-4),
        epsilon=config.get("epsilon", 0.01), k_max=config.get("k_max", 10),
    )
    result = reweighted_l1(problem)
    dump_sparsity(result.history, problem, out / "sparsity.json")
    payload = result.to_json(problem)
    ok = result.feasible
    if ok:
        graph, w = result.selected_graph(problem)
        _write_json(out / "network.json", graph_to_json(graph, w))
        if config.get("simulate"):
            sim = _run_simulation(KuramotoSystem(graph, w, omega), config, out, "trajectory")
            payload["simulation"] = sim
            ok = sim["synchronized"] and sim["phi"] <= problem.gamma_d
    payload["validated"] = ok
    _write_json(out / "design.json", payload)
    return EXIT_OK if ok else EXIT_INFEASIBLE


def cmd_braess_scan(config, root, out, args) -> int:
    graph, w = _graph(config["graph"], root)
    omega = _vector(config["omega"], graph.n, "omega")
    edge = tuple(config["edge"])
    try:
        build_incidence([edge], graph.n)
    except GraphError as exc:
        raise InputError(f"bad scan edge: {exc}") from exc
    lo, hi, steps = config["grid"]
    rows, crossing = experiments.braess_scan(graph, w, omega, edge, lo, hi, int(steps),
                                             simulate_points=bool(config.get("simulate")))
    experiments.write_scan_csv(out / "scan.csv", rows)
    _write_json(out / "scan.json", {"edge": list(edge), "crossing": crossing})
    return EXIT_OK


def cmd_experiments(args, out) -> int:
    name = args.name
    target = out / name
    if name == "clocks30":
        alpha = _alpha_mode({"alpha": "auto"}, args)
        summary = experiments.run_clocks30(target, seed=args.seed, alpha=alpha)
    elif name == "sparse30":
        alpha = _alpha_mode({"alpha": 2.0}, args)
        if alpha is None:
            raise InputError("sparse30 needs a numeric alpha")
        summary = experiments.run_sparse30(target, alpha=alpha)
    else:
        summary = experiments.run_braess8(target)
    return EXIT_OK if summary["ok"] else EXIT_INFEASIBLE


COMMANDS = {
    "bound": cmd_bound,
    "simulate": cmd_simulate,
    "fixed-point": cmd_fixed_point,
    "freq-design": cmd_freq_design,
    "weight-design": cmd_weight_design,
    "sparse-design": cmd_sparse_design,
    "braess-scan": cmd_braess_scan,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kuramoto-design", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path)
    common.add_argument("--out", type=Path, default=Path("."))
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--alpha", default=None, help="trace-penalty weight, or 'auto'")
    common.add_argument("-v", "--verbose", action="store_true")
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    exp = sub.add_parser("experiments", parents=[common])
    exp.add_argument("name", choices=sorted(experiments.EXPERIMENTS))
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_INPUT
    out = args.out
    try:
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "experiments":
            return cmd_experiments(args, out)
        config, root = _load_config(args.config, args.command)
        return COMMANDS[args.command](config, root, out, args)
    except (InputError, GraphError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (AlphaTooSmall, TightnessUnreachable, conic.NumericalFailure) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
