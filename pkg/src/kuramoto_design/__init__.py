"""Design of Kuramoto oscillator networks under a phase-cohesiveness constraint."""

from .graph import Graph, GraphError, build_incidence, cycle_basis, laplacian_bundle
from .dynamics import KuramotoSystem, center_frequencies, detect_sync, integrate, simulate
from .fixed_point import cohesiveness_bound, solve_fixed_point, stability_check

__all__ = [
    "Graph", "GraphError", "build_incidence", "cycle_basis", "laplacian_bundle",
    "KuramotoSystem", "center_frequencies", "detect_sync", "integrate", "simulate",
    "cohesiveness_bound", "solve_fixed_point", "stability_check",
]
