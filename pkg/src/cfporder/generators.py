"""Synthetic test patterns: paths, stars, grids, Erdős–Rényi graphs.

All generators return patterns with a full diagonal so they behave exactly
like parsed files. ``relabel_pattern`` applies a vertex permutation, which
turns a conveniently labeled mesh into one whose natural ordering carries no
accidental bandwidth structure.
"""

from __future__ import annotations

import numpy as np

from .graph import AdjacencyGraph
from .mmio import SparseSymmetricPattern


def _pattern_from_edges(n: int, edges) -> SparseSymmetricPattern:
    diag = [(v, v) for v in range(n)]
    return SparseSymmetricPattern(n, np.array(diag + [(int(u), int(v)) for u, v in edges], dtype=np.int64))


def path_pattern(n: int) -> SparseSymmetricPattern:
    return _pattern_from_edges(n, [(i, i + 1) for i in range(n - 1)])


def star_pattern(n: int) -> SparseSymmetricPattern:
    """Center is vertex 0."""
    return _pattern_from_edges(n, [(0, i) for i in range(1, n)])


def grid_pattern(rows: int, cols: int) -> SparseSymmetricPattern:
    edges = []
    for i in range(rows):
        for j in range(cols):
            v = i * cols + j
            if i + 1 < rows:
                edges.append((v, v + cols))
            if j + 1 < cols:
                edges.append((v, v + 1))
    return _pattern_from_edges(rows * cols, edges)


def erdos_pattern(n: int, p: float, rng: np.random.Generator) -> SparseSymmetricPattern:
    mask = rng.random((n, n)) < p
    edges = [(i, j) for i in range(n) for j in range(i + 1, n) if mask[i, j]]
    return _pattern_from_edges(n, edges)


def relabel_pattern(pattern: SparseSymmetricPattern, perm: np.ndarray) -> SparseSymmetricPattern:
    perm = np.asarray(perm, dtype=np.int64)
    mapped = perm[pattern.entries]
    return SparseSymmetricPattern(pattern.n, mapped)


def pattern_from_graph(graph: AdjacencyGraph) -> SparseSymmetricPattern:
    return _pattern_from_edges(graph.n, graph.edge_array())
