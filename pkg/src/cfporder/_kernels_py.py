"""Pure-Python kernels for the symbolic-factorization hot loops.

Same API as the compiled twin ``_kernels_cy``; which one the package uses is
decided in ``_backend``. Adjacency is passed in CSR form (``indptr``,
``indices``) with sorted neighbor lists and no self-loops.

The elimination game keeps the reduced graph as one Python big-int bitset per
vertex, which keeps the clique insertion at word speed even from pure Python.
"""

from __future__ import annotations

import math

import numpy as np

BACKEND = "python"


def eliminate_fill(n, indptr, indices, elim_seq):
    """Play the elimination game and collect fill edges.

    Returns ``(fill_u, fill_v, step_degrees)`` where the fill edges satisfy
    ``u < v`` and are sorted lexicographically, and ``step_degrees[t]`` is the
    degree of the vertex eliminated at step ``t`` in the reduced graph right
    before its elimination.
    """
    rows = [0] * n
    for v in range(n):
        bits = 0
        for w in indices[indptr[v]:indptr[v + 1]]:
            bits |= 1 << int(w)
        rows[v] = bits

    fill_u = []
    fill_v = []
    step_degrees = np.zeros(n, dtype=np.int64)

    for t in range(n):
        v = int(elim_seq[t])
        nbrs = rows[v]
        step_degrees[t] = nbrs.bit_count()
        clear_v = ~(1 << v)
        m = nbrs
        while m:
            low = m & -m
            a = low.bit_length() - 1
            m ^= low
            # new neighbors of a from this clique, above a to record each once
            new = m & ~rows[a]
            nm = new
            while nm:
                nlow = nm & -nm
                b = nlow.bit_length() - 1
                nm ^= nlow
                fill_u.append(a)
                fill_v.append(b)
            rows[a] = (rows[a] | (nbrs & ~low)) & clear_v
        rows[v] = 0

    fu = np.asarray(fill_u, dtype=np.int64)
    fv = np.asarray(fill_v, dtype=np.int64)
    order = np.lexsort((fv, fu))
    return fu[order], fv[order], step_degrees


def fill_path_exists(n, indptr, indices, rank, i, j):
    """Restricted BFS: is there an i-j path whose interior vertices all have
    rank below ``min(rank[i], rank[j])``? A direct edge counts."""
    i = int(i)
    j = int(j)
    limit = min(int(rank[i]), int(rank[j]))
    visited = bytearray(n)
    visited[i] = 1
    stack = [i]
    while stack:
        u = stack.pop()
        for w in indices[indptr[u]:indptr[u + 1]]:
            w = int(w)
            if w == j:
                return True
            if rank[w] < limit and not visited[w]:
                visited[w] = 1
                stack.append(w)
    return False


def fill_path_set(n, indptr, indices, rank):
    """All non-adjacent pairs (u < v) joined by a fill path, lexicographic.

    Deliberately the quadratic oracle: one restricted BFS per pair.
    """
    out_u = []
    out_v = []
    for u in range(n):
        row = set(int(w) for w in indices[indptr[u]:indptr[u + 1]])
        for v in range(u + 1, n):
            if v in row:
                continue
            if fill_path_exists(n, indptr, indices, rank, u, v):
                out_u.append(u)
                out_v.append(v)
    return np.asarray(out_u, dtype=np.int64), np.asarray(out_v, dtype=np.int64)


def chol_factor_inplace(n, Lp, Li, Lx, up_ptr, up_col, up_pos):
    """Left-looking sparse Cholesky on a precomputed factor pattern.

    ``Lp``/``Li`` describe the CSC pattern of L (diagonal entry first in each
    column, rows ascending). ``Lx`` enters holding the values of the permuted
    input scattered into that pattern and leaves holding L. ``up_ptr``,
    ``up_col`` and ``up_pos`` list, for each column k, the columns j < k with
    L[k, j] != 0 together with the storage index of that entry.

    Returns 0 on success, or ``k + 1`` if the pivot of column k is not
    positive.
    """
    work = np.zeros(n, dtype=np.float64)
    for k in range(n):
        start = Lp[k]
        end = Lp[k + 1]
        for p in range(start, end):
            work[Li[p]] = Lx[p]
        for q in range(up_ptr[k], up_ptr[k + 1]):
            j = up_col[q]
            ljk = Lx[up_pos[q]]
            if ljk == 0.0:
                continue
            for p in range(Lp[j], Lp[j + 1]):
                i = Li[p]
                if i >= k:
                    work[i] -= Lx[p] * ljk
        pivot = work[k]
        if not pivot > 0.0:
            return k + 1
        dkk = math.sqrt(pivot)
        Lx[start] = dkk
        for p in range(start + 1, end):
            Lx[p] = work[Li[p]] / dkk
        for p in range(start, end):
            work[Li[p]] = 0.0
    return 0
