"""Agent network graphs.

Nodes are 0-indexed in code and 1-indexed whenever a graph is shown to a
person (edge-list files, CLI output).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

KINDS = ("complete", "path", "cycle", "star", "grid2d", "erdos_renyi")


@dataclass(frozen=True)
class Graph:
    n: int
    edges: frozenset
    adjacency: np.ndarray = field(repr=False, compare=False)

    @classmethod
    def from_edges(cls, n, edges):
        if n < 1:
            raise ValueError(f"graph needs at least one node, got n={n}")
        norm = set()
        for i, j in edges:
            i, j = int(i), int(j)
            if i == j:
                raise ValueError(f"self-loop at node {i}")
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"edge ({i}, {j}) out of range for n={n}")
            norm.add((min(i, j), max(i, j)))
        A = np.zeros((n, n))
        for i, j in norm:
            A[i, j] = A[j, i] = 1.0
        A.setflags(write=False)
        return cls(n=n, edges=frozenset(norm), adjacency=A)

    @property
    def degrees(self):
        return self.adjacency.sum(axis=1).astype(int)

    @property
    def connected(self):
        seen = {0}
        stack = [0]
        A = self.adjacency
        while stack:
            i = stack.pop()
            for j in np.flatnonzero(A[i]):
                if j not in seen:
                    seen.add(int(j))
                    stack.append(int(j))
        return len(seen) == self.n

    def to_edge_list(self):
        """Text form: first line ``n``, then one 1-indexed ``i j`` per line."""
        lines = [str(self.n)]
        lines += [f"{i + 1} {j + 1}" for i, j in sorted(self.edges)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_edge_list(cls, text):
        rows = [ln.split() for ln in text.splitlines() if ln.strip()]
        if not rows or len(rows[0]) != 1:
            raise ValueError("edge list must start with a line holding n")
        n = int(rows[0][0])
        edges = []
        for row in rows[1:]:
            if len(row) != 2:
                raise ValueError(f"malformed edge line: {' '.join(row)!r}")
            edges.append((int(row[0]) - 1, int(row[1]) - 1))
        return cls.from_edges(n, edges)

    def save(self, path):
        Path(path).write_text(self.to_edge_list())

    @classmethod
    def load(cls, path):
        return cls.from_edge_list(Path(path).read_text())


def make_graph(kind, n, p=None, seed=None):
    """Build one of the standard topologies on ``n`` nodes.

    ``erdos_renyi`` needs ``p`` and ``seed``; the sample may be disconnected,
    which is reported by :attr:`Graph.connected` rather than rejected here.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if kind == "complete":
        edges = [(i, j) for i in range(n) for j in range(i + 1, n)]
    elif kind == "path":
        edges = [(i, i + 1) for i in range(n - 1)]
    elif kind == "cycle":
        if n < 3:
            raise ValueError("cycle needs n >= 3")
        edges = [(i, (i + 1) % n) for i in range(n)]
    elif kind == "star":
        edges = [(0, i) for i in range(1, n)]
    elif kind == "grid2d":
        side = math.isqrt(n)
        if side * side != n:
            raise ValueError(f"grid2d needs a perfect square n, got {n}")
        edges = []
        for r in range(side):
            for c in range(side):
                k = r * side + c
                if c + 1 < side:
                    edges.append((k, k + 1))
                if r + 1 < side:
                    edges.append((k, k + side))
    elif kind == "erdos_renyi":
        if p is None or not 0.0 <= p <= 1.0:
            raise ValueError(f"erdos_renyi needs p in [0, 1], got {p}")
        if seed is None:
            raise ValueError("erdos_renyi needs an explicit seed")
        rng = np.random.default_rng(seed)
        iu, ju = np.triu_indices(n, k=1)
        keep = rng.random(iu.size) < p
        edges = list(zip(iu[keep].tolist(), ju[keep].tolist()))
    else:
        raise ValueError(f"unknown topology {kind!r}; expected one of {KINDS}")
    return Graph.from_edges(n, edges)
