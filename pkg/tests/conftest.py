import numpy as np
import pytest

from kuramoto_design.graph import build_incidence


def random_tree(n, rng):
    """Random labelled tree with random edge orientations."""
    edges = []
    for v in range(2, n + 1):
        u = int(rng.integers(1, v))
        edges.append((u, v) if rng.random() < 0.5 else (v, u))
    return build_incidence(edges, n)


def random_connected(n, extra, rng):
    """Random tree plus ``extra`` distinct chords."""
    tree = random_tree(n, rng)
    have = {frozenset(e) for e in tree.edges}
    free = [(i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1) if frozenset((i, j)) not in have]
    extra = min(extra, len(free))
    pick = rng.choice(len(free), size=extra, replace=False) if extra else []
    edges = list(tree.edges) + [free[k] for k in pick]
    return build_incidence(edges, n)


def centered(rng, n, scale=1.0):
    omega = rng.uniform(-scale, scale, n)
    return omega - omega.mean()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def two_node():
    return build_incidence([(1, 2)], 2)


@pytest.fixture
def triangle():
    return build_incidence([(1, 2), (2, 3), (1, 3)], 3)
