"""Matching-based coarsening hierarchy shared by both network stages.

Each level halves (at best) the previous one by pairing vertices along a
maximal matching; greedy choices use the normalized-cut style weight
w(u, v) * (1/deg(u) + 1/deg(v)) on merged edge weights. Coarsening stops at
two vertices, the seeds of the spectral stage, so for a connected input of at
least two vertices the coarsest level has exactly two.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import AdjacencyGraph


@dataclass(frozen=True)
class CoarseningHierarchy:
    """``graphs[0]`` is the input; ``cluster_maps[l]`` sends a level-l vertex
    to its cluster in level l+1. Every cluster holds one or two vertices."""

    graphs: list = field(repr=False)
    cluster_maps: list = field(repr=False)

    @property
    def depth(self) -> int:
        return len(self.graphs)

    @property
    def coarsest(self) -> AdjacencyGraph:
        return self.graphs[-1]

    def composed_map(self) -> np.ndarray:
        """Finest vertex -> coarsest cluster."""
        out = np.arange(self.graphs[0].n, dtype=np.int64)
        for cmap in self.cluster_maps:
            out = cmap[out]
        return out


def _coarsen_once(n, edges, weights, rng):
    """One matching pass. ``edges`` is an (m, 2) int array with u < v and
    ``weights`` the merged edge weights. Returns (cluster_map, n_coarse)."""
    wdeg = np.zeros(n)
    adj: list[list[tuple[int, float]]] = [[] for _ in range(n)]
    for (u, v), w in zip(edges, weights):
        adj[u].append((int(v), w))
        adj[v].append((int(u), w))
        wdeg[u] += w
        wdeg[v] += w

    mate = np.full(n, -1, dtype=np.int64)
    for u in rng.permutation(n):
        u = int(u)
        if mate[u] != -1:
            continue
        best = -1
        best_score = -np.inf
        for v, w in adj[u]:
            if mate[v] != -1:
                continue
            score = w * (1.0 / wdeg[u] + 1.0 / wdeg[v])
            if score > best_score or (score == best_score and v < best):
                best, best_score = v, score
        if best != -1:
            mate[u] = best
            mate[best] = u

    if np.all(mate == -1) and n > 2:
        # edgeless level: force-merge consecutive ids pairwise
        for u in range(0, n - 1, 2):
            mate[u] = u + 1
            mate[u + 1] = u

    cmap = np.full(n, -1, dtype=np.int64)
    nxt = 0
    for u in range(n):
        if cmap[u] != -1:
            continue
        cmap[u] = nxt
        if mate[u] != -1:
            cmap[mate[u]] = nxt
        nxt += 1
    return cmap, nxt


def coarsen(graph: AdjacencyGraph, rng: np.random.Generator) -> CoarseningHierarchy:
    """Coarsen until at most two vertices remain. Reproducible for a fixed
    generator state."""
    graphs = [graph]
    cluster_maps = []
    edges = graph.edge_array()
    weights = np.ones(len(edges))
    current_n = graph.n
    while current_n > 2:
        cmap, n_coarse = _coarsen_once(current_n, edges, weights, rng)
        if n_coarse == current_n:
            break  # cannot shrink further (defensive; force-merge prevents this)
        # merge parallel edges, drop the intra-cluster ones
        agg: dict[tuple[int, int], float] = {}
        for (u, v), w in zip(edges, weights):
            cu, cv = int(cmap[u]), int(cmap[v])
            if cu == cv:
                continue
            key = (cu, cv) if cu < cv else (cv, cu)
            agg[key] = agg.get(key, 0.0) + w
        keys = sorted(agg)
        edges = np.array(keys, dtype=np.int64).reshape(-1, 2)
        weights = np.array([agg[k] for k in keys])
        cluster_maps.append(cmap)
        graphs.append(AdjacencyGraph.from_edges(n_coarse, edges))
        current_n = n_coarse
    return CoarseningHierarchy(graphs=graphs, cluster_maps=cluster_maps)


def prolong(coarse_features: np.ndarray, level: int, hierarchy: CoarseningHierarchy) -> np.ndarray:
    """Piecewise-constant interpolation from ``level`` down to ``level - 1``:
    each fine vertex copies its cluster's feature row."""
    if not 1 <= level < hierarchy.depth:
        raise ValueError(f"level {level} has no finer neighbor")
    coarse_features = np.asarray(coarse_features)
    if coarse_features.shape[0] != hierarchy.graphs[level].n:
        raise ValueError(
            f"expected {hierarchy.graphs[level].n} feature rows, got {coarse_features.shape[0]}"
        )
    return coarse_features[hierarchy.cluster_maps[level - 1]]


def restrict(fine_features: np.ndarray, level: int, hierarchy: CoarseningHierarchy) -> np.ndarray:
    """Mean-pool features from ``level`` up to ``level + 1``."""
    if not 0 <= level < hierarchy.depth - 1:
        raise ValueError(f"level {level} has no coarser neighbor")
    fine_features = np.asarray(fine_features)
    fine_n = hierarchy.graphs[level].n
    if fine_features.shape[0] != fine_n:
        raise ValueError(f"expected {fine_n} feature rows, got {fine_features.shape[0]}")
    cmap = hierarchy.cluster_maps[level]
    coarse_n = hierarchy.graphs[level + 1].n
    out = np.zeros((coarse_n,) + fine_features.shape[1:], dtype=np.float64)
    np.add.at(out, cmap, fine_features)
    counts = np.bincount(cmap, minlength=coarse_n).astype(np.float64)
    return out / counts.reshape((-1,) + (1,) * (fine_features.ndim - 1))
