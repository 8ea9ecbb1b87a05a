"""Triangulated Maximally Filtered Graph (TMFG).

Greedy planar filtering of a similarity matrix: start from the heaviest
tetrahedron, then repeatedly drop the (vertex, triangular face) pair with
the largest total weight of the three new edges into that face. Every
insertion splits one face into three, so the result is a maximal planar
chordal graph with ``3p - 6`` edges whose maximal cliques are ``p - 3``
tetrahedra.
"""
import itertools
from dataclasses import dataclass, field

import numpy as np

from .corr import check_similarity
from .graph import ChordalGraph
from .homology import all_cliques, mcs_order

EXACT_SEED_LIMIT = 30
SEED_POOL = 8


@dataclass(frozen=True)
class TmfgTrace:
    """Replayable record of a TMFG construction."""

    initial: tuple
    insertions: tuple  # ((vertex, (a, b, c)), ...)

    def replay(self, p: int) -> ChordalGraph:
        """Rebuild the graph from the trace, validating every move."""
        seen = set(self.initial)
        if len(seen) != 4:
            raise ValueError("initial tetrahedron needs 4 distinct vertices")
        edges = set(itertools.combinations(sorted(self.initial), 2))
        faces = set(itertools.combinations(sorted(self.initial), 3))
        for v, face in self.insertions:
            face = tuple(sorted(face))
            if v in seen:
                raise ValueError(f"vertex {v} inserted twice")
            if face not in faces:
                raise ValueError(f"face {face} is not active")
            seen.add(v)
            faces.remove(face)
            a, b, c = face
            faces.update({tuple(sorted(t)) for t in ((v, a, b), (v, a, c), (v, b, c))})
            edges.update((min(v, u), max(v, u)) for u in face)
        if seen != set(range(p)):
            raise ValueError("trace does not cover every vertex exactly once")
        return ChordalGraph(p, frozenset(edges), "tmfg")


def initial_tetrahedron(w: np.ndarray) -> tuple:
    """The 4 vertices with the largest sum of mutual weights.

    Exhaustive up to ``EXACT_SEED_LIMIT`` vertices; beyond that the search
    is restricted to the ``SEED_POOL`` vertices with the largest
    off-diagonal row sums.
    """
    p = w.shape[0]
    if p <= EXACT_SEED_LIMIT:
        pool = np.arange(p)
    else:
        rs = w.sum(axis=1) - np.diag(w)
        pool = np.sort(np.lexsort((np.arange(p), -rs))[:SEED_POOL])
    quads = np.array(list(itertools.combinations(pool, 4)))
    total = np.zeros(len(quads))
    for i, j in itertools.combinations(range(4), 2):
        total += w[quads[:, i], quads[:, j]]
    return tuple(int(v) for v in quads[int(np.argmax(total))])


def tmfg_construct(w) -> tuple:
    """Build the TMFG of a symmetric similarity matrix.

    Returns ``(graph, trace)``. Deterministic: ties are broken by the
    smallest vertex index, then by the lexicographically smallest face.
    """
    w = check_similarity(w)
    p = w.shape[0]
    if p < 4:
        raise ValueError("TMFG needs at least 4 vertices")
    seed = initial_tetrahedron(w)
    n_cols = 4 + 3 * (p - 4)
    gain = np.full((p, n_cols), -np.inf)
    faces = []
    inserted = np.zeros(p, dtype=bool)
    inserted[list(seed)] = True

    def add_face(face):
        col = len(faces)
        faces.append(face)
        a, b, c = face
        gain[:, col] = w[:, a] + w[:, b] + w[:, c]
        gain[inserted, col] = -np.inf

    for face in itertools.combinations(seed, 3):
        add_face(face)
    edges = set(itertools.combinations(seed, 2))
    moves = []
    for _ in range(p - 4):
        best = gain.max()
        rows, cols = np.nonzero(gain == best)
        v = int(rows.min())
        col = min(cols[rows == v], key=lambda c: faces[c])
        face = faces[col]
        moves.append((v, face))
        inserted[v] = True
        gain[v, :] = -np.inf
        gain[:, col] = -np.inf
        a, b, c = face
        edges.update((min(v, u), max(v, u)) for u in face)
        for t in ((a, b, v), (a, c, v), (b, c, v)):
            add_face(tuple(sorted(t)))
    graph = ChordalGraph(p, frozenset(edges), "tmfg")
    return graph, TmfgTrace(seed, tuple(moves))


@dataclass
class ValidationReport:
    p: int
    n_edges: int
    expected_edges: int
    is_chordal: bool
    clique_counts: dict = field(default_factory=dict)
    max_clique_size: int = 0

    @property
    def checks(self) -> dict:
        p = self.p
        return {
            "edge_count": self.n_edges == self.expected_edges,
            "chordal": self.is_chordal,
            "max_clique_le_4": self.max_clique_size <= 4,
            "triangles": self.clique_counts.get(3, 0) == 3 * p - 8,
            "tetrahedra": self.clique_counts.get(4, 0) == p - 3,
        }

    @property
    def is_tmfg(self) -> bool:
        return all(self.checks.values())

    def failures(self) -> list:
        return [k for k, ok in self.checks.items() if not ok]


def verify_tmfg(g: ChordalGraph) -> ValidationReport:
    """Structural audit of a candidate TMFG. Never raises; failed checks
    are listed in the report."""
    _, chordal = mcs_order(g)
    census = all_cliques(g, max_size=5)
    counts = {k + 1: len(c) for k, c in enumerate(census)}
    return ValidationReport(
        p=g.p,
        n_edges=len(g.edges),
        expected_edges=3 * g.p - 6,
        is_chordal=chordal,
        clique_counts={k: counts.get(k, 0) for k in (2, 3, 4)},
        max_clique_size=max(counts) if counts else 0,
    )
