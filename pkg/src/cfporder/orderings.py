"""Classical fill-reducing orderings, plus the bridge from per-vertex scores
to an elimination ordering.

Every routine here returns a valid permutation for any input, handles
disconnected graphs component by component, and breaks all ties by smallest
vertex id so runs are reproducible without seeds.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .graph import (
    AdjacencyGraph,
    Ordering,
    bfs_levels,
    connected_components,
    induced_subgraph,
    pseudo_peripheral_vertex,
)

FIEDLER_RESIDUAL_TOL = 1e-6


def natural_ordering(graph: AdjacencyGraph) -> Ordering:
    return Ordering.identity(graph.n)


def cuthill_mckee(graph: AdjacencyGraph) -> Ordering:
    """BFS from a pseudo-peripheral vertex, neighbors enqueued in ascending
    degree order; components processed by smallest contained id."""
    comp = connected_components(graph)
    degs = graph.degrees()
    seq: list[int] = []
    visited = np.zeros(graph.n, dtype=bool)
    for c in range(comp.max() + 1 if graph.n else 0):
        members = np.flatnonzero(comp == c)
        start = pseudo_peripheral_vertex(graph, int(members[0]))
        visited[start] = True
        queue = [start]
        head = 0
        while head < len(queue):
            u = queue[head]
            head += 1
            seq.append(u)
            nbrs = [int(w) for w in graph.neighbors(u) if not visited[w]]
            nbrs.sort(key=lambda w: (degs[w], w))
            for w in nbrs:
                visited[w] = True
                queue.append(w)
    return Ordering(np.asarray(seq, dtype=np.int64))


def reverse_cuthill_mckee(graph: AdjacencyGraph) -> Ordering:
    return cuthill_mckee(graph).reversed()


def minimum_degree(graph: AdjacencyGraph) -> Ordering:
    """Exact minimum degree on the evolving elimination graph (no
    approximation), ties to the smallest vertex id."""
    adj = graph.adjacency_sets()
    alive = set(range(graph.n))
    seq = np.empty(graph.n, dtype=np.int64)
    for t in range(graph.n):
        v = min(alive, key=lambda u: (len(adj[u]), u))
        seq[t] = v
        nbrs = adj[v]
        for a in nbrs:
            adj[a].discard(v)
        nlist = sorted(nbrs)
        for ai, a in enumerate(nlist):
            adj[a].update(nlist[ai + 1:])
            adj[a].discard(a)
            for b in nlist[ai + 1:]:
                adj[b].add(a)
        adj[v] = set()
        alive.discard(v)
    return Ordering(seq)


def _fiedler_connected(graph: AdjacencyGraph) -> tuple[np.ndarray, float]:
    """Fiedler vector of a connected graph by shift-inverted power iteration
    with explicit deflation of the constant direction.

    Returns (unit vector orthogonal to ones, Rayleigh quotient). Residual
    target: ||Lx - r(x) x|| <= FIEDLER_RESIDUAL_TOL.
    """
    n = graph.n
    edges = graph.edge_array()
    deg = graph.degrees().astype(np.float64)
    lap = sp.csc_matrix(
        (
            np.concatenate([deg, -np.ones(2 * len(edges))]),
            (
                np.concatenate([np.arange(n), edges[:, 0], edges[:, 1]]),
                np.concatenate([np.arange(n), edges[:, 1], edges[:, 0]]),
            ),
        ),
        shape=(n, n),
    )
    shift = 1e-8 * (1.0 + deg.max())
    solve = spla.factorized(lap + shift * sp.identity(n, format="csc"))

    x = np.arange(1, n + 1, dtype=np.float64)
    x -= x.mean()
    x /= np.linalg.norm(x)
    lam = float(x @ (lap @ x))
    for _ in range(20000):
        y = solve(x)
        y -= y.mean()
        norm = np.linalg.norm(y)
        if norm == 0.0:
            break
        x = y / norm
        lx = lap @ x
        lam = float(x @ lx)
        if np.linalg.norm(lx - lam * x) <= FIEDLER_RESIDUAL_TOL:
            break
    else:
        raise ArithmeticError("Fiedler iteration did not converge")
    return x, lam


def _fix_sign(x: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(np.abs(x) > 1e-12)
    if len(nz) and x[nz[0]] < 0:
        return -x
    return x


def fiedler_vector(graph: AdjacencyGraph) -> np.ndarray:
    """Eigenvector of the combinatorial Laplacian for the smallest nonzero
    eigenvalue; for disconnected graphs each component carries its own unit
    Fiedler slice (zero for single-vertex components)."""
    out = np.zeros(graph.n)
    comp = connected_components(graph)
    for c in range(comp.max() + 1 if graph.n else 0):
        members = np.flatnonzero(comp == c)
        if len(members) < 2:
            continue
        sub, mapping = induced_subgraph(graph, members)
        x, _ = _fiedler_connected(sub)
        out[mapping] = _fix_sign(x)
    return out


def fiedler_ordering(graph: AdjacencyGraph) -> Ordering:
    """Sort ascending by Fiedler entry, ties by id; components concatenated in
    component-id order."""
    x = fiedler_vector(graph)
    comp = connected_components(graph)
    order = np.lexsort((np.arange(graph.n), x, comp))
    return Ordering(order.astype(np.int64))


def _nd_recurse(graph: AdjacencyGraph, vertices: np.ndarray, min_part_size: int, out: list) -> None:
    sub, mapping = induced_subgraph(graph, vertices)
    comp = connected_components(sub)
    ncomp = comp.max() + 1 if sub.n else 0
    if ncomp > 1:
        for c in range(ncomp):
            _nd_recurse(graph, mapping[np.flatnonzero(comp == c)], min_part_size, out)
        return
    if sub.n <= min_part_size:
        md = minimum_degree(sub)
        out.extend(int(mapping[v]) for v in md.elim_seq)
        return
    x, _ = _fiedler_connected(sub)
    order = np.lexsort((np.arange(sub.n), x))
    half = sub.n // 2
    side = np.zeros(sub.n, dtype=np.int8)
    side[order[half:]] = 1
    # vertex separator from the edge cut: per cut edge take the endpoint on
    # the smaller side, skipping edges another separator vertex already covers
    small = 0 if half <= sub.n - half else 1
    in_sep = np.zeros(sub.n, dtype=bool)
    for u, v in sub.edge_array():
        if side[u] == side[v] or in_sep[u] or in_sep[v]:
            continue
        in_sep[u if side[u] == small else v] = True
    sep = np.flatnonzero(in_sep)
    left = np.flatnonzero((side == 0) & ~in_sep)
    right = np.flatnonzero((side == 1) & ~in_sep)
    if len(sep) == 0 or len(left) == 0 or len(right) == 0:
        md = minimum_degree(sub)  # degenerate split; fall back
        out.extend(int(mapping[v]) for v in md.elim_seq)
        return
    _nd_recurse(graph, mapping[left], min_part_size, out)
    _nd_recurse(graph, mapping[right], min_part_size, out)
    sep_sub, sep_map = induced_subgraph(sub, sep)
    sep_md = minimum_degree(sep_sub)
    out.extend(int(mapping[sep_map[v]]) for v in sep_md.elim_seq)


def nested_dissection(graph: AdjacencyGraph, min_part_size: int = 8) -> Ordering:
    """Recursive Fiedler bisection; the separator (greedy cover of the cut
    edges) is ordered last, small parts by exact minimum degree."""
    if min_part_size < 1:
        raise ValueError("min_part_size must be at least 1")
    out: list[int] = []
    _nd_recurse(graph, np.arange(graph.n, dtype=np.int64), min_part_size, out)
    return Ordering(np.asarray(out, dtype=np.int64))


def ordering_from_scores(scores: np.ndarray) -> Ordering:
    """Higher score is eliminated earlier; ties go to the smaller id."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    n = len(scores)
    order = np.lexsort((np.arange(n), -scores))
    return Ordering(order.astype(np.int64))
