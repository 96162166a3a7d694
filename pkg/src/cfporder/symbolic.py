"""Exact fill-in analysis.

Two independent routes to the same fill set: the elimination game (simulating
Gaussian elimination on the graph) and the fill-path oracle (one restricted
BFS per vertex pair). Their agreement on every instance is the core
correctness property of the whole toolkit and is what ``cfporder verify``
checks. The inner loops live in the kernel backend.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ._backend import kernels
from .graph import AdjacencyGraph, Ordering
from .mmio import SparseSymmetricPattern


class NotPositiveDefiniteError(ArithmeticError):
    """A pivot came out non-positive during numeric factorization."""


@dataclass(frozen=True)
class FillReport:
    """Outcome of symbolic factorization under one ordering."""

    n: int
    fill_edges: frozenset
    factor_edges: frozenset
    step_degrees: np.ndarray = field(repr=False)

    @property
    def nnz_factor_full(self) -> int:
        """nnz(L + U - I): full diagonal plus both triangles of the factor."""
        return self.n + 2 * len(self.factor_edges)

    @property
    def flops(self) -> int:
        """Divisions plus multiply-subtract pairs, summed over steps; the n
        square roots are not included."""
        d = self.step_degrees.astype(np.int64)
        return int(np.sum(d * (d + 3) // 2))


def eliminate(graph: AdjacencyGraph, ordering: Ordering) -> FillReport:
    """Play the elimination game: remove vertices in order, connecting the
    remaining neighbors of each removed vertex into a clique. New edges are
    the fill."""
    if len(ordering) != graph.n:
        raise ValueError(f"ordering has {len(ordering)} entries for a graph with {graph.n} vertices")
    fu, fv, deg = kernels.eliminate_fill(graph.n, graph.indptr, graph.indices, ordering.elim_seq)
    fill = frozenset(zip(fu.tolist(), fv.tolist()))
    return FillReport(
        n=graph.n,
        fill_edges=fill,
        factor_edges=graph.edge_set() | fill,
        step_degrees=deg,
    )


def fill_path_exists(graph: AdjacencyGraph, ordering: Ordering, i: int, j: int) -> bool:
    """Single-pair oracle: is there an i-j path whose
    interior vertices are all eliminated before both endpoints? Includes the
    direct edge as the zero-interior case."""
    if i == j:
        raise ValueError("fill paths are defined for distinct endpoints")
    return bool(
        kernels.fill_path_exists(graph.n, graph.indptr, graph.indices, ordering.rank, i, j)
    )


def fill_set_via_paths(graph: AdjacencyGraph, ordering: Ordering) -> frozenset:
    """The independent fill oracle: test every non-adjacent pair. Quadratic
    in n times a BFS; meant for modest sizes."""
    if len(ordering) != graph.n:
        raise ValueError(f"ordering has {len(ordering)} entries for a graph with {graph.n} vertices")
    fu, fv = kernels.fill_path_set(graph.n, graph.indptr, graph.indices, ordering.rank)
    return frozenset(zip(fu.tolist(), fv.tolist()))


def fill_in_ratio(report: FillReport, pattern: SparseSymmetricPattern) -> float:
    """(nnz(L+U-I) - nnz(A)) / nnz(A)."""
    base = pattern.nnz_full()
    if base == 0:
        raise ValueError("fill-in ratio undefined for an empty pattern")
    return (report.nnz_factor_full - base) / base


def cholesky_flops(report: FillReport) -> int:
    return report.flops


def bandwidth(graph: AdjacencyGraph, ordering: Ordering) -> int:
    """max |rank(i) - rank(j)| over edges of the reordered matrix."""
    edges = graph.edge_array()
    if not len(edges):
        return 0
    r = ordering.rank
    return int(np.max(np.abs(r[edges[:, 0]] - r[edges[:, 1]])))


def laplacian_plus_identity(pattern: SparseSymmetricPattern) -> np.ndarray:
    """Synthesize SPD values on the pattern: degree+1 on the diagonal, -1 off
    it. Aligned with ``pattern.entries``; requires the full diagonal."""
    deg = np.zeros(pattern.n, dtype=np.int64)
    off = pattern.offdiagonal()
    np.add.at(deg, off[:, 0], 1)
    np.add.at(deg, off[:, 1], 1)
    values = np.empty(len(pattern.entries), dtype=np.float64)
    diag_seen = 0
    for idx, (i, j) in enumerate(pattern.entries):
        if i == j:
            values[idx] = deg[i] + 1.0
            diag_seen += 1
        else:
            values[idx] = -1.0
    if diag_seen != pattern.n:
        raise ValueError("value synthesis needs every diagonal entry present")
    return values


@dataclass(frozen=True)
class CholeskyFactor:
    """Sparse lower factor of the permuted matrix, in CSC with the diagonal
    first in every column."""

    n: int
    indptr: np.ndarray = field(repr=False)
    indices: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    elapsed_seconds: float = 0.0

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.n))
        for k in range(self.n):
            for p in range(self.indptr[k], self.indptr[k + 1]):
                out[self.indices[p], k] = self.values[p]
        return out

    def nonzero_pattern(self) -> frozenset:
        """Strictly-lower (row > col) positions carrying a nonzero value, as
        (col, row) pairs to match the undirected edge convention."""
        out = set()
        for k in range(self.n):
            for p in range(self.indptr[k] + 1, self.indptr[k + 1]):
                if self.values[p] != 0.0:
                    out.add((k, int(self.indices[p])))
        return frozenset(out)


def _permuted_dense(pattern: SparseSymmetricPattern, values: np.ndarray, rank: np.ndarray) -> np.ndarray:
    a = np.zeros((pattern.n, pattern.n))
    for (i, j), x in zip(pattern.entries, values):
        pi, pj = rank[i], rank[j]
        a[pi, pj] = x
        a[pj, pi] = x
    return a


def numeric_cholesky(
    pattern: SparseSymmetricPattern,
    values: np.ndarray,
    ordering: Ordering,
    verify_limit: int = 500,
) -> CholeskyFactor:
    """Factor P A Pᵀ = L Lᵀ on the symbolic factor pattern of the reordered
    matrix.

    ``values`` pairs with ``pattern.entries``. The elapsed time covers the
    symbolic analysis plus the numeric sweep; the residual check on small
    matrices runs outside the clock.
    """
    n = pattern.n
    values = np.asarray(values, dtype=np.float64)
    if len(values) != len(pattern.entries):
        raise ValueError("values must align with pattern entries")
    if len(ordering) != n:
        raise ValueError("ordering size does not match the pattern")

    t0 = time.perf_counter()
    rank = ordering.rank

    # permuted graph, then its fill under the natural order
    off = pattern.offdiagonal()
    perm_edges = np.column_stack([rank[off[:, 0]], rank[off[:, 1]]]) if len(off) else off
    pgraph = AdjacencyGraph.from_edges(n, perm_edges)
    fu, fv, _ = kernels.eliminate_fill(n, pgraph.indptr, pgraph.indices, np.arange(n, dtype=np.int64))

    # CSC factor pattern: diagonal first, rows ascending
    orig = pgraph.edge_array()
    cols = np.concatenate([np.arange(n, dtype=np.int64), orig[:, 0] if len(orig) else np.array([], dtype=np.int64), fu])
    rows_ = np.concatenate([np.arange(n, dtype=np.int64), orig[:, 1] if len(orig) else np.array([], dtype=np.int64), fv])
    order = np.lexsort((rows_, cols))
    cols, rows_ = cols[order], rows_[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, cols + 1, 1)
    np.cumsum(indptr, out=indptr)
    indices = rows_

    # scatter the permuted input values into the factor slots
    nnzL = len(indices)
    lx = np.zeros(nnzL, dtype=np.float64)
    keys = cols * n + rows_
    for (i, j), x in zip(pattern.entries, values):
        pi, pj = int(rank[i]), int(rank[j])
        c, r = (pi, pj) if pi <= pj else (pj, pi)
        pos = int(np.searchsorted(keys, c * n + r))
        lx[pos] = x

    # per-row list of (column j < k, position of L[k, j])
    strict = indices != cols
    up_rows = indices[strict]
    up_cols_all = cols[strict]
    up_positions = np.flatnonzero(strict)
    row_order = np.lexsort((up_cols_all, up_rows))
    up_ptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(up_ptr, up_rows + 1, 1)
    np.cumsum(up_ptr, out=up_ptr)
    up_col = up_cols_all[row_order]
    up_pos = up_positions[row_order]

    bad = kernels.chol_factor_inplace(n, indptr, indices, lx, up_ptr, up_col, up_pos)
    elapsed = time.perf_counter() - t0
    if bad:
        raise NotPositiveDefiniteError(f"non-positive pivot at permuted column {bad - 1}")

    factor = CholeskyFactor(n, indptr, indices, lx, elapsed)
    if n <= verify_limit:
        a = _permuted_dense(pattern, values, rank)
        l = factor.to_dense()
        resid = np.max(np.abs(a - l @ l.T))
        scale = max(np.max(np.abs(a)), 1e-300)
        if resid > 1e-8 * scale:
            raise ArithmeticError(f"factor residual {resid:.3e} exceeds 1e-8 * |A|max")
    return factor
