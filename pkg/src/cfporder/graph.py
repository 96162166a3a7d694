"""Adjacency graphs, elimination orderings, and the BFS routines every
ordering algorithm leans on.

The graph is the matrix pattern minus its diagonal: one undirected edge per
off-diagonal structural nonzero. It is immutable after construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mmio import SparseSymmetricPattern

UNREACHED = -1


class AdjacencyGraph:
    """Undirected simple graph in CSR form with sorted neighbor lists."""

    __slots__ = ("n", "indptr", "indices", "m")

    def __init__(self, n: int, indptr: np.ndarray, indices: np.ndarray):
        self.n = int(n)
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int64)
        self.m = len(self.indices) // 2

    @classmethod
    def from_edges(cls, n: int, edges) -> "AdjacencyGraph":
        """Build from an iterable of undirected (u, v) pairs; duplicates and
        self-loops are dropped."""
        arr = np.array(list(edges), dtype=np.int64).reshape(-1, 2)
        if arr.size and (arr.min() < 0 or arr.max() >= n):
            raise ValueError("edge endpoint out of range")
        arr = arr[arr[:, 0] != arr[:, 1]]
        lo = np.minimum(arr[:, 0], arr[:, 1])
        hi = np.maximum(arr[:, 0], arr[:, 1])
        und = np.unique(np.column_stack([lo, hi]), axis=0) if arr.size else arr
        both = np.vstack([und, und[:, ::-1]]) if und.size else und.reshape(0, 2)
        order = np.lexsort((both[:, 1], both[:, 0])) if both.size else np.array([], dtype=np.int64)
        both = both[order]
        indptr = np.zeros(n + 1, dtype=np.int64)
        if both.size:
            np.add.at(indptr, both[:, 0] + 1, 1)
        np.cumsum(indptr, out=indptr)
        return cls(n, indptr, both[:, 1] if both.size else np.array([], dtype=np.int64))

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def degree(self, v: int) -> int:
        return int(self.indptr[v + 1] - self.indptr[v])

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def has_edge(self, u: int, v: int) -> bool:
        row = self.neighbors(u)
        pos = np.searchsorted(row, v)
        return pos < len(row) and row[pos] == v

    def edge_array(self) -> np.ndarray:
        """(m, 2) array of undirected edges with u < v, lexicographic."""
        src = np.repeat(np.arange(self.n, dtype=np.int64), np.diff(self.indptr))
        mask = src < self.indices
        return np.column_stack([src[mask], self.indices[mask]])

    def edge_set(self) -> frozenset:
        return frozenset((int(u), int(v)) for u, v in self.edge_array())

    def adjacency_sets(self) -> list[set]:
        return [set(int(w) for w in self.neighbors(v)) for v in range(self.n)]


@dataclass(frozen=True)
class Ordering:
    """Elimination ordering: ``elim_seq[t]`` is the vertex removed at step t,
    ``rank`` its inverse."""

    elim_seq: np.ndarray
    rank: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]

    def __post_init__(self):
        seq = np.ascontiguousarray(self.elim_seq, dtype=np.int64)
        n = len(seq)
        counts = np.zeros(n, dtype=np.int64)
        if n and (seq.min() < 0 or seq.max() >= n):
            raise ValueError("ordering is not a permutation: id out of range")
        np.add.at(counts, seq, 1)
        if n and not np.all(counts == 1):
            raise ValueError("ordering is not a permutation: duplicate vertex")
        rank = np.empty(n, dtype=np.int64)
        rank[seq] = np.arange(n, dtype=np.int64)
        object.__setattr__(self, "elim_seq", seq)
        object.__setattr__(self, "rank", rank)

    def __len__(self) -> int:
        return len(self.elim_seq)

    def __eq__(self, other) -> bool:
        return isinstance(other, Ordering) and np.array_equal(self.elim_seq, other.elim_seq)

    def __hash__(self):
        return hash(self.elim_seq.tobytes())

    @classmethod
    def identity(cls, n: int) -> "Ordering":
        return cls(np.arange(n, dtype=np.int64))

    def reversed(self) -> "Ordering":
        return Ordering(self.elim_seq[::-1].copy())


def build_adjacency_graph(pattern: SparseSymmetricPattern) -> AdjacencyGraph:
    """One edge per off-diagonal folded entry; diagonal entries dropped."""
    return AdjacencyGraph.from_edges(pattern.n, pattern.offdiagonal())


def connected_components(graph: AdjacencyGraph) -> np.ndarray:
    """Component id per vertex; ids are contiguous from 0 in order of each
    component's smallest vertex."""
    comp = np.full(graph.n, UNREACHED, dtype=np.int64)
    next_id = 0
    for start in range(graph.n):
        if comp[start] != UNREACHED:
            continue
        comp[start] = next_id
        stack = [start]
        while stack:
            u = stack.pop()
            for w in graph.neighbors(u):
                if comp[w] == UNREACHED:
                    comp[w] = next_id
                    stack.append(int(w))
        next_id += 1
    return comp


def bfs_levels(graph: AdjacencyGraph, root: int) -> np.ndarray:
    """Hop distance from ``root`` per vertex, UNREACHED (-1) elsewhere."""
    if not 0 <= root < graph.n:
        raise ValueError(f"root {root} out of range")
    level = np.full(graph.n, UNREACHED, dtype=np.int64)
    level[root] = 0
    frontier = [root]
    d = 0
    while frontier:
        d += 1
        nxt = []
        for u in frontier:
            for w in graph.neighbors(u):
                if level[w] == UNREACHED:
                    level[w] = d
                    nxt.append(int(w))
        frontier = nxt
    return level


def pseudo_peripheral_vertex(graph: AdjacencyGraph, start: int) -> int:
    """Iterated-BFS eccentricity heuristic within ``start``'s component."""
    if not 0 <= start < graph.n:
        raise ValueError(f"start {start} out of range")
    current = start
    ecc = -1
    while True:
        level = bfs_levels(graph, current)
        reached = level != UNREACHED
        new_ecc = int(level[reached].max())
        if new_ecc <= ecc:
            return current
        ecc = new_ecc
        last = np.flatnonzero(level == new_ecc)
        degs = graph.degrees()[last]
        current = int(last[np.lexsort((last, degs))[0]])


def induced_subgraph(graph: AdjacencyGraph, vertices: np.ndarray) -> tuple[AdjacencyGraph, np.ndarray]:
    """Subgraph on ``vertices`` (relabeled 0..k-1 in the given order) plus the
    local-to-global vertex map."""
    vertices = np.asarray(vertices, dtype=np.int64)
    local = np.full(graph.n, -1, dtype=np.int64)
    local[vertices] = np.arange(len(vertices), dtype=np.int64)
    edges = []
    for v in vertices:
        lv = local[v]
        for w in graph.neighbors(int(v)):
            lw = local[w]
            if lw > lv:
                edges.append((lv, lw))
    return AdjacencyGraph.from_edges(len(vertices), edges), vertices
