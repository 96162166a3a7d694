"""Shared graph builders and independent oracles for the test suite.

Oracles here deliberately avoid the library's own code paths: dense
eigensolvers, exhaustive BFS, dense elimination simulations.
"""

from __future__ import annotations

import numpy as np

from cfporder.graph import AdjacencyGraph
from cfporder.hierarchy import CoarseningHierarchy


def path_graph(n):
    return AdjacencyGraph.from_edges(n, [(i, i + 1) for i in range(n - 1)])


def star_graph(n):
    return AdjacencyGraph.from_edges(n, [(0, i) for i in range(1, n)])


def complete_graph(n):
    return AdjacencyGraph.from_edges(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def grid_graph(rows, cols):
    edges = []
    for i in range(rows):
        for j in range(cols):
            v = i * cols + j
            if i + 1 < rows:
                edges.append((v, v + cols))
            if j + 1 < cols:
                edges.append((v, v + 1))
    return AdjacencyGraph.from_edges(rows * cols, edges)


def erdos_graph(n, p, rng):
    mask = rng.random((n, n)) < p
    return AdjacencyGraph.from_edges(n, [(i, j) for i in range(n) for j in range(i + 1, n) if mask[i, j]])


def random_connected_graph(n, rng, extra_p=0.05):
    """Random spanning tree plus a sprinkle of extra edges."""
    edges = []
    order = rng.permutation(n)
    for i in range(1, n):
        edges.append((int(order[i]), int(order[rng.integers(0, i)])))
    mask = rng.random((n, n)) < extra_p
    edges += [(i, j) for i in range(n) for j in range(i + 1, n) if mask[i, j]]
    return AdjacencyGraph.from_edges(n, edges)


def random_tree(n, rng):
    edges = [(int(rng.integers(0, i)), i) for i in range(1, n)]
    return AdjacencyGraph.from_edges(n, edges)


def relabeled(graph, perm):
    perm = np.asarray(perm, dtype=np.int64)
    return AdjacencyGraph.from_edges(graph.n, [(perm[u], perm[v]) for u, v in graph.edge_array()])


def dense_laplacian(graph):
    L = np.zeros((graph.n, graph.n))
    for u, v in graph.edge_array():
        L[u, u] += 1
        L[v, v] += 1
        L[u, v] -= 1
        L[v, u] -= 1
    return L


def dense_lambda2(graph):
    return float(np.linalg.eigvalsh(dense_laplacian(graph))[1])


def bfs_reachable(graph, src):
    seen = {src}
    stack = [src]
    while stack:
        u = stack.pop()
        for w in graph.neighbors(u):
            w = int(w)
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return seen


def eccentricity(graph, v):
    """Exhaustive BFS eccentricity within v's component."""
    dist = {v: 0}
    frontier = [v]
    d = 0
    while frontier:
        d += 1
        nxt = []
        for u in frontier:
            for w in graph.neighbors(u):
                w = int(w)
                if w not in dist:
                    dist[w] = d
                    nxt.append(w)
        frontier = nxt
    return max(dist.values())


def dense_elimination_flops(graph, ordering):
    """Simulate dense elimination on a boolean occupancy matrix, counting one
    division per nonzero below the pivot and one multiply-subtract per
    updated pair, which is the d(d+3)/2 census done the slow way."""
    n = graph.n
    occ = np.zeros((n, n), dtype=bool)
    for u, v in graph.edge_array():
        occ[u, v] = occ[v, u] = True
    np.fill_diagonal(occ, True)
    # relabel so elimination runs by row index
    occ = occ[np.ix_(ordering.elim_seq, ordering.elim_seq)]
    flops = 0
    for k in range(n):
        below = [i for i in range(k + 1, n) if occ[i, k]]
        flops += len(below)  # divisions by the pivot
        for ai, a in enumerate(below):
            for b in below[ai:]:
                flops += 1  # one multiply-subtract pair
                occ[a, b] = occ[b, a] = True
    return flops


def permute_hierarchy(h: CoarseningHierarchy, perm) -> CoarseningHierarchy:
    """Relabel the finest level by ``perm`` while keeping every coarse level
    and cluster identity fixed."""
    perm = np.asarray(perm, dtype=np.int64)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(len(perm))
    graphs = [relabeled(h.graphs[0], perm)] + list(h.graphs[1:])
    cmaps = list(h.cluster_maps)
    if cmaps:
        cmaps[0] = cmaps[0][inv]
    return CoarseningHierarchy(graphs=graphs, cluster_maps=cmaps)
