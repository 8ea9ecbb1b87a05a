"""Undirected simple graphs on vertices ``0..p-1``."""
import json
from dataclasses import dataclass, field
from typing import Iterable

PROVENANCES = ("tmfg", "user-supplied")


@dataclass(frozen=True)
class ChordalGraph:
    """Vertex count, edge set and where the graph came from.

    Edges are stored as sorted pairs. The class does not itself certify
    chordality; use :func:`homnet.homology.mcs_order` for that.
    """

    p: int
    edges: frozenset
    provenance: str = "user-supplied"
    labels: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        norm = set()
        for e in self.edges:
            i, j = (int(v) for v in e)
            if i == j:
                raise ValueError(f"self-loop at vertex {i}")
            if not (0 <= i < self.p and 0 <= j < self.p):
                raise ValueError(f"edge {(i, j)} out of range for p={self.p}")
            norm.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", frozenset(norm))
        if self.labels and len(self.labels) != self.p:
            raise ValueError("one label per vertex required")

    @classmethod
    def from_edges(cls, p: int, edges: Iterable, provenance="user-supplied",
                   labels=()):
        return cls(p, frozenset(tuple(e) for e in edges), provenance,
                   tuple(labels))

    def adjacency(self) -> list:
        """Neighbour sets indexed by vertex."""
        adj = [set() for _ in range(self.p)]
        for i, j in self.edges:
            adj[i].add(j)
            adj[j].add(i)
        return adj

    def sorted_edges(self) -> list:
        return sorted(self.edges)

    def label(self, v: int) -> str:
        return str(self.labels[v]) if self.labels else str(v)

    def to_dict(self) -> dict:
        d = {"p": self.p, "edges": [list(e) for e in self.sorted_edges()],
             "provenance": self.provenance}
        if self.labels:
            d["labels"] = list(self.labels)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "ChordalGraph":
        return cls.from_edges(int(d["p"]), d["edges"],
                              d.get("provenance", "user-supplied"),
                              d.get("labels", ()))

    @classmethod
    def from_json(cls, text: str) -> "ChordalGraph":
        return cls.from_dict(json.loads(text))

    def to_dot(self) -> str:
        lines = ["graph G {"]
        for v in range(self.p):
            lines.append(f'  {v} [label="{self.label(v)}"];')
        for i, j in self.sorted_edges():
            lines.append(f"  {i} -- {j};")
        lines.append("}")
        return "\n".join(lines) + "\n"
