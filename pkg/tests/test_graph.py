import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import null_space

from kuramoto_design.graph import (GraphError, build_incidence, complete_graph, connected_components,
                                   cycle_basis, graph_to_json, laplacian_bundle, load_graph_json,
                                   path_graph, pinv_eig, ridge_pinv)

from conftest import random_connected, random_tree


def test_single_edge_incidence():
    g = build_incidence([(1, 2)], 2)
    np.testing.assert_array_equal(g.B, [[-1], [1]])
    assert (g.B.T @ np.array([0.0, 5.0]))[0] == 5.0


def test_triangle_columns(triangle):
    np.testing.assert_array_equal(triangle.B.T, [[-1, 1, 0], [0, -1, 1], [-1, 0, 1]])


@pytest.mark.parametrize("edges, n", [([(1, 1)], 2), ([(1, 2), (2, 1)], 2), ([(1, 3)], 2), ([(0, 1)], 2)])
def test_rejects_bad_edges(edges, n):
    with pytest.raises(GraphError):
        build_incidence(edges, n)


def test_disconnected_graph_is_accepted_then_flagged():
    g = build_incidence([(1, 2), (3, 4)], 4)
    bundle = laplacian_bundle(g, np.ones(2))
    assert not bundle.connected and not bundle.reliable
    assert bundle.lambda2 <= 1e-8
    # eigendecomposition fallback is still a proper pseudoinverse
    np.testing.assert_allclose(bundle.Lpinv, np.linalg.pinv(bundle.L), atol=1e-10)
    with pytest.raises(GraphError):
        cycle_basis(g)


def test_incidence_is_read_only(triangle):
    with pytest.raises(ValueError):
        triangle.B[0, 0] = 3.0


def test_two_node_pseudoinverse(two_node):
    b = laplacian_bundle(two_node, [1.0])
    np.testing.assert_allclose(b.L, [[1, -1], [-1, 1]])
    # closed form: (L + 11^T/2)^-1 = [[0.75, 0.25], [0.25, 0.75]], minus 11^T/2
    np.testing.assert_allclose(b.Lpinv, [[0.25, -0.25], [-0.25, 0.25]], atol=1e-14)
    assert b.lambda2 == pytest.approx(2.0)


def test_star_matches_eig_oracle():
    g = build_incidence([(1, 2), (1, 3), (1, 4)], 4)
    b = laplacian_bundle(g, np.ones(3))
    vals, vecs = np.linalg.eigh(b.L)
    oracle = sum(np.outer(vecs[:, k], vecs[:, k]) / vals[k] for k in range(1, 4))
    np.testing.assert_allclose(b.Lpinv, oracle, atol=1e-10)


def test_negative_weight_rejected(triangle):
    with pytest.raises(GraphError):
        laplacian_bundle(triangle, [1.0, -1.0, 1.0])


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 20), st.integers(0, 15), st.integers(0, 2**32 - 1))
def test_laplacian_invariants(n, extra, seed):
    rng = np.random.default_rng(seed)
    g = random_connected(n, extra, rng)
    w = rng.uniform(0.1, 3.0, g.m)
    b = laplacian_bundle(g, w)
    one = np.ones(n)
    assert b.connected
    np.testing.assert_allclose(one @ g.B, 0.0)
    np.testing.assert_allclose(b.L, b.L.T)
    np.testing.assert_allclose(b.L @ one, 0.0, atol=1e-12)
    assert np.linalg.eigvalsh(b.L)[0] > -1e-10
    np.testing.assert_allclose(b.L @ b.Lpinv, np.eye(n) - np.full((n, n), 1 / n), atol=1e-10)
    np.testing.assert_allclose(b.Lpinv @ one, 0.0, atol=1e-10)
    np.testing.assert_allclose(b.Lpinv, b.Lpinv.T, atol=1e-14)
    eig = pinv_eig(b.L)
    assert np.linalg.norm(ridge_pinv(b.L) - eig) / np.linalg.norm(eig) <= 1e-9


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 12), st.integers(0, 3), st.integers(0, 2**32 - 1))
def test_rank_counts_components(n, parts, seed):
    rng = np.random.default_rng(seed)
    # disjoint union of random trees plus chords
    sizes = np.diff(np.sort(np.r_[0, rng.choice(np.arange(1, n), size=min(parts, n - 1), replace=False), n]))
    edges, offset = [], 0
    for s in sizes:
        t = random_connected(int(s), 2, rng) if s > 1 else None
        if t is not None:
            edges += [(i + offset, j + offset) for i, j in t.edges]
        offset += int(s)
    g = build_incidence(edges, n)
    comps = len(connected_components(g))
    assert comps == len(sizes)
    rank = np.linalg.matrix_rank(g.B) if g.m else 0
    assert rank == n - comps


def test_tree_has_empty_cycle_basis(rng):
    g = random_tree(9, rng)
    assert cycle_basis(g).shape == (g.m, 0)


def test_triangle_cycle_basis(triangle):
    F = cycle_basis(triangle)
    assert F.shape == (3, 1)
    np.testing.assert_allclose(triangle.B @ F, 0.0)
    f = F[:, 0] / F[0, 0]
    np.testing.assert_allclose(f, [1, 1, -1])
    ns = null_space(triangle.B)
    assert abs(abs(ns[:, 0] @ F[:, 0]) / np.linalg.norm(F[:, 0]) - 1) < 1e-12


def test_four_cycle_signs():
    g = build_incidence([(1, 2), (3, 2), (3, 4), (1, 4)], 4)
    F = cycle_basis(g)
    assert F.shape == (4, 1)
    np.testing.assert_allclose(g.B @ F, 0.0)
    f = F[:, 0] / F[0, 0]
    # walking 1 -> 2 -> 3 -> 4 -> 1 meets edges along, against, along, against
    np.testing.assert_allclose(f, [1, -1, 1, -1])


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 12), st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_cycle_basis_spans_null_space(n, extra, seed):
    g = random_connected(n, extra, np.random.default_rng(seed))
    F = cycle_basis(g)
    assert F.shape == (g.m, g.m - n + 1)
    assert set(np.unique(F)) <= {-1.0, 0.0, 1.0}
    np.testing.assert_allclose(g.B @ F, 0.0)
    if F.shape[1]:
        assert np.linalg.matrix_rank(F) == F.shape[1]
        N = null_space(g.B)
        Q, _ = np.linalg.qr(F)
        assert np.max(np.abs(N - Q @ (Q.T @ N))) <= 1e-9


def test_json_round_trip(tmp_path):
    g = complete_graph(4)
    w = np.arange(1.0, 7.0)
    p = tmp_path / "g.json"
    p.write_text(json.dumps(graph_to_json(g, w)))
    g2, w2 = load_graph_json(p)
    assert g2.edges == g.edges
    np.testing.assert_array_equal(w2, w)


def test_json_missing_fields():
    with pytest.raises(GraphError):
        load_graph_json({"n": 2})


def test_union_and_path():
    g = path_graph(3).union(build_incidence([(1, 3)], 3))
    assert g.edges == ((1, 2), (2, 3), (1, 3))
    assert g.edge_index(3, 1) == 2
