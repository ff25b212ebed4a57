"""Oriented graphs, weighted Laplacians, pseudoinverses and cycle spaces.

Node indices are 1-based at the API boundary (edge lists, JSON) and 0-based
inside every matrix.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CONNECTIVITY_TOL = 1e-8


class GraphError(ValueError):
    """Raised for malformed edge lists or graphs unsuitable for an operation."""


@dataclass(frozen=True)
class Graph:
    """Oriented, labelled simple graph.

    Edge ``e`` (0-based position in ``edges``) is the ordered pair
    ``(source, sink)``; column ``e`` of ``B`` holds -1 at the source and +1 at
    the sink, so ``(B.T @ x)[e] = x[sink] - x[source]``.
    """

    n: int
    edges: tuple[tuple[int, int], ...]
    B: np.ndarray = field(repr=False, compare=False)

    @property
    def m(self) -> int:
        return len(self.edges)

    def edge_index(self, i: int, j: int) -> int:
        """Position of the undirected edge {i, j}; raises KeyError if absent."""
        for e, (a, b) in enumerate(self.edges):
            if (a, b) == (i, j) or (a, b) == (j, i):
                return e
        raise KeyError((i, j))

    def laplacian(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        return (self.B * w) @ self.B.T

    def union(self, other: "Graph") -> "Graph":
        """Graph with the edges of ``self`` followed by those of ``other``."""
        if other.n != self.n:
            raise GraphError("node counts differ")
        return build_incidence(self.edges + other.edges, self.n)


def build_incidence(edges, n: int) -> Graph:
    """Build an oriented graph from 1-based ``(source, sink)`` pairs.

    Self-loops and repeated undirected edges are rejected. Disconnected
    graphs are accepted here.
    """
    n = int(n)
    if n < 1:
        raise GraphError("graph needs at least one node")
    edges = tuple((int(i), int(j)) for i, j in edges)
    B = np.zeros((n, len(edges)))
    seen = set()
    for e, (i, j) in enumerate(edges):
        if not (1 <= i <= n and 1 <= j <= n):
            raise GraphError(f"edge {e + 1} = ({i}, {j}) has a node outside 1..{n}")
        if i == j:
            raise GraphError(f"self-loop at node {i}")
        key = frozenset((i, j))
        if key in seen:
            raise GraphError(f"duplicate edge {{{i}, {j}}}")
        seen.add(key)
        B[i - 1, e] = -1.0
        B[j - 1, e] = 1.0
    B.setflags(write=False)
    return Graph(n=n, edges=edges, B=B)


def complete_graph(n: int) -> Graph:
    return build_incidence([(i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1)], n)


def path_graph(n: int) -> Graph:
    return build_incidence([(i, i + 1) for i in range(1, n)], n)


def connected_components(graph: Graph, w=None) -> list[list[int]]:
    """Connected components (0-based node lists); edges with zero weight are ignored."""
    adj = [[] for _ in range(graph.n)]
    for e, (i, j) in enumerate(graph.edges):
        if w is not None and w[e] <= 0:
            continue
        adj[i - 1].append(j - 1)
        adj[j - 1].append(i - 1)
    label = [-1] * graph.n
    comps = []
    for s in range(graph.n):
        if label[s] >= 0:
            continue
        label[s] = len(comps)
        comp, queue = [s], deque([s])
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if label[v] < 0:
                    label[v] = label[s]
                    comp.append(v)
                    queue.append(v)
        comps.append(sorted(comp))
    return comps


def is_connected(graph: Graph, w=None) -> bool:
    return len(connected_components(graph, w)) == 1


@dataclass(frozen=True)
class LaplacianBundle:
    L: np.ndarray
    Lpinv: np.ndarray
    lambda2: float
    connected: bool

    @property
    def reliable(self) -> bool:
        return self.connected


def pinv_eig(L: np.ndarray, tol: float = CONNECTIVITY_TOL) -> np.ndarray:
    """Pseudoinverse of a symmetric PSD matrix with small eigenvalues truncated."""
    vals, vecs = np.linalg.eigh(L)
    inv = np.zeros_like(vals)
    keep = vals > tol
    inv[keep] = 1.0 / vals[keep]
    return (vecs * inv) @ vecs.T


def ridge_pinv(L: np.ndarray) -> np.ndarray:
    """L^+ = (L + 11^T/n)^-1 - 11^T/n, valid for connected Laplacians."""
    n = L.shape[0]
    J = np.full((n, n), 1.0 / n)
    Lpinv = np.linalg.inv(L + J) - J
    return 0.5 * (Lpinv + Lpinv.T)


def algebraic_connectivity(L: np.ndarray) -> float:
    if L.shape[0] < 2:
        return 0.0
    return float(np.linalg.eigvalsh(L)[1])


def laplacian_bundle(graph: Graph, w) -> LaplacianBundle:
    w = np.asarray(w, dtype=float)
    if w.shape != (graph.m,):
        raise GraphError(f"expected {graph.m} edge weights, got shape {w.shape}")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise GraphError("edge weights must be finite and nonnegative")
    L = graph.laplacian(w)
    lam2 = algebraic_connectivity(L)
    if lam2 > CONNECTIVITY_TOL:
        return LaplacianBundle(L=L, Lpinv=ridge_pinv(L), lambda2=lam2, connected=True)
    return LaplacianBundle(L=L, Lpinv=pinv_eig(L), lambda2=lam2, connected=False)


def spanning_tree(graph: Graph) -> list[int]:
    """Edge positions of a BFS spanning tree rooted at node 1."""
    adj = [[] for _ in range(graph.n)]
    for e, (i, j) in enumerate(graph.edges):
        adj[i - 1].append((j - 1, e))
        adj[j - 1].append((i - 1, e))
    visited = [False] * graph.n
    visited[0] = True
    tree, queue = [], deque([0])
    while queue:
        u = queue.popleft()
        for v, e in adj[u]:
            if not visited[v]:
                visited[v] = True
                tree.append(e)
                queue.append(v)
    if not all(visited):
        raise GraphError("graph is disconnected")
    return tree


def cycle_basis(graph: Graph) -> np.ndarray:
    """Fundamental-cycle basis of ker(B), shape ``(m, m - n + 1)``.

    Column ``c`` has +1 on its defining non-tree edge and +/-1 along the tree
    path closing the cycle, signed by edge orientation, so ``B @ F == 0``.
    """
    tree = spanning_tree(graph)
    in_tree = set(tree)
    # parent pointers of the tree rooted at node 0
    parent = [(-1, -1)] * graph.n
    depth = [0] * graph.n
    adj = [[] for _ in range(graph.n)]
    for e in tree:
        i, j = graph.edges[e]
        adj[i - 1].append((j - 1, e))
        adj[j - 1].append((i - 1, e))
    queue, seen = deque([0]), {0}
    while queue:
        u = queue.popleft()
        for v, e in adj[u]:
            if v not in seen:
                seen.add(v)
                parent[v] = (u, e)
                depth[v] = depth[u] + 1
                queue.append(v)

    def step_sign(e: int, frm: int, to: int) -> float:
        # +1 when traversing e along its orientation (source -> sink)
        return 1.0 if graph.edges[e][0] - 1 == frm else -1.0

    cols = []
    for e, (i, j) in enumerate(graph.edges):
        if e in in_tree:
            continue
        f = np.zeros(graph.m)
        f[e] = 1.0
        # walk the tree path from sink j back to source i
        a, b = j - 1, i - 1
        up_a, up_b = [], []
        while a != b:
            if depth[a] >= depth[b]:
                p, pe = parent[a]
                up_a.append((pe, a, p))
                a = p
            else:
                p, pe = parent[b]
                up_b.append((pe, p, b))
                b = p
        for pe, frm, to in up_a + up_b[::-1]:
            f[pe] += step_sign(pe, frm, to)
        cols.append(f)
    if not cols:
        return np.zeros((graph.m, 0))
    return np.column_stack(cols)


def load_graph_json(source) -> tuple[Graph, np.ndarray]:
    """Read ``{"n": int, "edges": [{"source", "sink", "weight"}, ...]}``."""
    if isinstance(source, (str, Path)):
        data = json.loads(Path(source).read_text())
    else:
        data = source
    try:
        n = int(data["n"])
        raw = data["edges"]
        edges = [(int(d["source"]), int(d["sink"])) for d in raw]
        w = np.array([float(d.get("weight", 1.0)) for d in raw])
    except (KeyError, TypeError, ValueError) as exc:
        raise GraphError(f"bad graph JSON: {exc}") from exc
    return build_incidence(edges, n), w


def graph_to_json(graph: Graph, w=None) -> dict:
    w = np.ones(graph.m) if w is None else np.asarray(w, dtype=float)
    return {
        "n": graph.n,
        "edges": [
            {"source": i, "sink": j, "weight": float(we)}
            for (i, j), we in zip(graph.edges, w)
        ],
    }
