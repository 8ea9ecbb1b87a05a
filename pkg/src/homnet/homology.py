"""Homological structure of chordal graphs.

Maximum cardinality search, maximal cliques, clique trees with separator
multiplicities, simplex enumeration and the layered Hasse diagram that
the sparse network is compiled from.
"""
import hashlib
import itertools
import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .graph import ChordalGraph

DEFAULT_DIM_CAP = 6


class NotChordalError(ValueError):
    pass


def mcs_order(g: ChordalGraph) -> tuple:
    """Maximum cardinality search.

    Returns ``(order, is_chordal)`` where ``order`` is the elimination
    order (the reverse of the visiting order) and ``is_chordal`` tells
    whether it is a perfect elimination ordering. Ties in the search are
    broken by lowest vertex index.
    """
    adj = g.adjacency()
    weight = [0] * g.p
    visited = [False] * g.p
    visit = []
    for _ in range(g.p):
        best = -1
        for v in range(g.p):
            if not visited[v] and (best < 0 or weight[v] > weight[best]):
                best = v
        visited[best] = True
        visit.append(best)
        for u in adj[best]:
            if not visited[u]:
                weight[u] += 1
    order = visit[::-1]
    return order, is_perfect_elimination(order, adj)


def is_perfect_elimination(order, adj) -> bool:
    pos = {v: i for i, v in enumerate(order)}
    for v in order:
        later = [u for u in adj[v] if pos[u] > pos[v]]
        if not later:
            continue
        parent = min(later, key=pos.__getitem__)
        for u in later:
            if u != parent and u not in adj[parent]:
                return False
    return True


def maximal_cliques(g: ChordalGraph) -> list:
    """Maximal cliques of a chordal graph as sorted tuples, sorted."""
    order, chordal = mcs_order(g)
    if not chordal:
        raise NotChordalError("graph is not chordal")
    adj = g.adjacency()
    pos = {v: i for i, v in enumerate(order)}
    candidates = []
    for v in order:
        candidates.append(frozenset([v] + [u for u in adj[v] if pos[u] > pos[v]]))
    candidates.sort(key=len, reverse=True)
    kept = []
    for c in candidates:
        if not any(c <= k for k in kept):
            kept.append(c)
    return sorted(tuple(sorted(c)) for c in kept)


@dataclass
class CliqueTree:
    """Junction tree over maximal cliques.

    ``separators`` aggregates equal edge separators as
    ``(vertex tuple, multiplicity)``; ``edge_separators`` lists them per
    tree edge in ``tree_edges`` order.
    """

    nodes: list
    tree_edges: list
    edge_separators: list
    separators: list
    is_forest: bool = False

    def running_intersection_ok(self) -> bool:
        vertices = set().union(*map(set, self.nodes)) if self.nodes else set()
        for v in vertices:
            holders = {i for i, c in enumerate(self.nodes) if v in c}
            links = [(a, b) for a, b in self.tree_edges
                     if a in holders and b in holders]
            if n_components(holders, links) != 1:
                return False
        return True

    def components_without(self, separator) -> int:
        """Number of tree components once every edge carrying
        ``separator`` is cut."""
        sep = tuple(sorted(separator))
        links = [e for e, s in zip(self.tree_edges, self.edge_separators)
                 if s != sep]
        return n_components(set(range(len(self.nodes))), links)


def n_components(nodes, links) -> int:
    parent = {n: n for n in nodes}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in links:
        parent[find(a)] = find(b)
    return len({find(n) for n in nodes})


def clique_tree(cliques: list, g: Optional[ChordalGraph] = None) -> CliqueTree:
    """Maximum-weight spanning tree of the clique intersection graph.

    Edge weight is the size of the intersection. Ties go to the
    lexicographically smallest clique pair. A disconnected graph yields a
    spanning forest with ``is_forest`` set.
    """
    nodes = sorted(tuple(sorted(c)) for c in cliques)
    if g is not None:
        expected = maximal_cliques(g)
        if nodes != expected:
            raise ValueError("cliques are not the maximal cliques of g")
    sets = [set(c) for c in nodes]
    pairs = []
    for i, j in itertools.combinations(range(len(nodes)), 2):
        w = len(sets[i] & sets[j])
        if w > 0:
            pairs.append((-w, i, j))
    pairs.sort()
    parent = list(range(len(nodes)))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    tree_edges, edge_seps = [], []
    for _, i, j in pairs:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
            tree_edges.append((i, j))
            edge_seps.append(tuple(sorted(sets[i] & sets[j])))
    counts = Counter(edge_seps)
    separators = sorted(counts.items(), key=lambda kv: (len(kv[0]), kv[0]))
    forest = len(nodes) > 0 and len(tree_edges) < len(nodes) - 1
    return CliqueTree(nodes, tree_edges, edge_seps, separators, forest)


def enumerate_simplexes(g: ChordalGraph, max_dim: Optional[int] = None,
                        cap: int = DEFAULT_DIM_CAP) -> list:
    """All cliques of size ``<= max_dim + 1``, one list per dimension.

    Cliques are generated as subsets of the maximal cliques and
    deduplicated; each layer is sorted lexicographically.
    """
    cliques = maximal_cliques(g)
    largest = max(len(c) for c in cliques)
    if max_dim is None:
        max_dim = max(1, largest - 1)
        if max_dim > cap:
            raise ValueError(f"largest clique has {largest} vertices; "
                             f"dimension {max_dim} exceeds cap {cap}")
    elif max_dim < 1:
        raise ValueError("max_dim must be >= 1")
    layers = [set() for _ in range(max_dim + 1)]
    for c in cliques:
        for d in range(min(len(c), max_dim + 1)):
            layers[d].update(itertools.combinations(c, d + 1))
    return [sorted(layer) for layer in layers]


@dataclass
class HasseDiagram:
    """Layered face lattice of a simplicial complex.

    ``layers[d]`` holds the d-simplexes as sorted vertex tuples.
    ``down_links[d]`` is an int array of shape (len(layers[d]), d + 1)
    with the ascending indices of each node's facets in ``layers[d - 1]``;
    ``down_links[0]`` is empty. ``up_links[d][i]`` lists the cofaces of
    node ``i`` in ``layers[d + 1]``.
    """

    layers: list
    down_links: list
    up_links: list = field(repr=False)

    @property
    def sizes(self) -> list:
        return [len(layer) for layer in self.layers]

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def n_nodes(self) -> int:
        return sum(self.sizes)

    @property
    def n_links(self) -> int:
        return sum(int(d.size) for d in self.down_links)

    @property
    def p(self) -> int:
        return len(self.layers[0])

    def maximal_simplexes(self) -> list:
        """Nodes with no up-links, i.e. the maximal cliques."""
        out = []
        for d, layer in enumerate(self.layers):
            for i, s in enumerate(layer):
                if len(self.up_links[d][i]) == 0:
                    out.append(s)
        return sorted(out)

    def edges(self) -> set:
        return set(self.layers[1]) if self.depth > 1 else set()

    def to_dict(self) -> dict:
        return {"layers": [[list(s) for s in layer] for layer in self.layers],
                "down_links": [d.tolist() for d in self.down_links]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def digest(self) -> str:
        """Stable SHA-256 of the layer contents."""
        return hashlib.sha256(json.dumps(self.to_dict()["layers"]).encode()).hexdigest()

    def to_dot(self, labels=None) -> str:
        def name(s):
            return "-".join(str(labels[v]) if labels else str(v) for v in s)

        lines = ["digraph Hasse {", "  rankdir=LR;"]
        for d, layer in enumerate(self.layers):
            lines.append(f"  subgraph cluster_L{d} {{")
            lines.append(f'    label="L{d}";')
            for i, s in enumerate(layer):
                lines.append(f'    n{d}_{i} [label="{name(s)}"];')
            lines.append("  }")
        for d in range(1, self.depth):
            for i, facets in enumerate(self.down_links[d]):
                for f in facets:
                    lines.append(f"  n{d - 1}_{int(f)} -> n{d}_{i};")
        lines.append("}")
        return "\n".join(lines) + "\n"


def build_hasse(simplexes: list) -> HasseDiagram:
    """Link every d-simplex to its (d-1)-faces.

    Trailing empty layers are dropped. Raises ``ValueError`` if the input
    is not closed under taking facets.
    """
    layers = [sorted(tuple(sorted(s)) for s in layer) for layer in simplexes]
    while len(layers) > 1 and not layers[-1]:
        layers.pop()
    if not layers or not layers[0]:
        raise ValueError("empty complex")
    for d, layer in enumerate(layers):
        if any(len(s) != d + 1 for s in layer):
            raise ValueError(f"layer {d} must hold {d + 1}-vertex simplexes")
    index = [{s: i for i, s in enumerate(layer)} for layer in layers]
    down = [np.zeros((len(layers[0]), 0), dtype=np.intp)]
    up = [[[] for _ in layer] for layer in layers]
    for d in range(1, len(layers)):
        links = np.empty((len(layers[d]), d + 1), dtype=np.intp)
        for i, s in enumerate(layers[d]):
            facets = []
            for k in range(d + 1):
                f = s[:k] + s[k + 1:]
                j = index[d - 1].get(f)
                if j is None:
                    raise ValueError(f"facet {f} of {s} missing from layer {d - 1}")
                facets.append(j)
            facets.sort()
            links[i] = facets
            for j in facets:
                up[d - 1][j].append(i)
        down.append(links)
    up = [[np.asarray(u, dtype=np.intp) for u in layer] for layer in up]
    return HasseDiagram(layers, down, up)


def hasse_from_graph(g: ChordalGraph, max_dim: Optional[int] = None,
                     cap: int = DEFAULT_DIM_CAP) -> HasseDiagram:
    return build_hasse(enumerate_simplexes(g, max_dim, cap))


def all_cliques(g: ChordalGraph, max_size: Optional[int] = None) -> list:
    """Every clique of any graph (chordal or not), grouped by size.

    Used for clique censuses; exponential in the clique number.
    """
    adj = g.adjacency()
    out = {}

    def extend(clique, cands):
        out.setdefault(len(clique), []).append(tuple(clique))
        if max_size is not None and len(clique) >= max_size:
            return
        for u in cands:
            extend(clique + [u], [w for w in cands if w > u and w in adj[u]])

    for v in range(g.p):
        extend([v], sorted(u for u in adj[v] if u > v))
    return [sorted(out.get(k, [])) for k in range(1, max(out) + 1)] if out else []
