import itertools

import numpy as np
import pytest

from homnet.graph import ChordalGraph
from homnet.synthetic import random_similarity
from homnet.tmfg import tmfg_construct

# Seven-vertex example network, 1-based labels: tetrahedron {3,4,5,6},
# triangles {2,4,6} and {4,6,7}, and the edge {1,4}.
EXAMPLE7_EDGES = [
    (3, 4), (3, 5), (3, 6), (4, 5), (4, 6), (5, 6),
    (2, 4), (2, 6),
    (4, 7), (6, 7),
    (1, 4),
]


def labelled(vertices):
    """1-based labels of a tuple of 0-based vertices."""
    return tuple(v + 1 for v in vertices)


@pytest.fixture
def example7():
    edges = [(a - 1, b - 1) for a, b in EXAMPLE7_EDGES]
    return ChordalGraph.from_edges(7, edges, labels=[str(i) for i in range(1, 8)])


@pytest.fixture
def k4():
    return ChordalGraph.from_edges(4, itertools.combinations(range(4), 2))


@pytest.fixture
def c4():
    return ChordalGraph.from_edges(4, [(0, 1), (1, 2), (2, 3), (3, 0)])


def random_tmfg(p, seed):
    rng = np.random.default_rng(seed)
    return tmfg_construct(random_similarity(p, rng))


def brute_force_cliques(g, max_size=None):
    """Every clique by exhaustive subset enumeration, grouped by size."""
    adj = g.adjacency()
    top = max_size or g.p
    out = []
    for k in range(1, top + 1):
        layer = [s for s in itertools.combinations(range(g.p), k)
                 if all(b in adj[a] for a, b in itertools.combinations(s, 2))]
        if not layer:
            break
        out.append(layer)
    return out
