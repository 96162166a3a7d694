# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the symbolic-factorization hot loops.

API-compatible with ``_kernels_py``; see that module for the contracts. The
reduced graph of the elimination game lives in a flat bitset (one row of
64-bit words per vertex) so clique insertion runs at word speed.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt
from libc.stdlib cimport free, malloc
from libc.string cimport memset

cnp.import_array()

BACKEND = "cython"

cdef extern from *:
    """
    static inline int popcount64(unsigned long long x) {
        return __builtin_popcountll(x);
    }
    static inline int ctz64(unsigned long long x) {
        return __builtin_ctzll(x);
    }
    """
    int popcount64(unsigned long long x) nogil
    int ctz64(unsigned long long x) nogil

ctypedef unsigned long long u64


def eliminate_fill(n, indptr, indices, elim_seq):
    if n == 0:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty.copy(), empty.copy()
    cdef cnp.int64_t[::1] ip = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef cnp.int64_t[::1] ix = np.ascontiguousarray(indices, dtype=np.int64)
    cdef cnp.int64_t[::1] seq = np.ascontiguousarray(elim_seq, dtype=np.int64)
    cdef Py_ssize_t nn = n
    cdef Py_ssize_t words = (nn + 63) >> 6

    cdef u64 *rows = <u64 *> malloc(nn * words * sizeof(u64))
    if rows == NULL:
        raise MemoryError()
    memset(rows, 0, nn * words * sizeof(u64))

    step_deg_arr = np.zeros(nn, dtype=np.int64)
    cdef cnp.int64_t[::1] step_deg = step_deg_arr

    cdef Py_ssize_t cap = 1024
    fu_arr = np.empty(cap, dtype=np.int64)
    fv_arr = np.empty(cap, dtype=np.int64)
    cdef cnp.int64_t[::1] fu = fu_arr
    cdef cnp.int64_t[::1] fv = fv_arr
    cdef Py_ssize_t nfill = 0

    cdef Py_ssize_t t, p, w, a, b, bit
    cdef Py_ssize_t v
    cdef u64 *nbrs = <u64 *> malloc(words * sizeof(u64))
    if nbrs == NULL:
        free(rows)
        raise MemoryError()
    cdef u64 cur, nw
    cdef int deg
    cdef Py_ssize_t wa, off

    try:
        for p in range(nn):
            for w in range(ip[p], ip[p + 1]):
                b = ix[w]
                rows[p * words + (b >> 6)] |= (<u64> 1) << (b & 63)
        for t in range(nn):
            v = seq[t]
            # degree and a private copy of the live neighborhood
            deg = 0
            for w in range(words):
                nbrs[w] = rows[v * words + w]
                deg += popcount64(nbrs[w])
            step_deg[t] = deg
            # clique insertion
            for wa in range(words):
                cur = nbrs[wa]
                while cur != 0:
                    bit = ctz64(cur)
                    cur &= cur - 1
                    a = (wa << 6) + bit
                    off = a * words
                    # fill edges (a, b) with b > a; same-word part first
                    if bit + 1 < 64:
                        nw = (nbrs[wa] & ~rows[off + wa]) & ((~(<u64> 0)) << (bit + 1))
                    else:
                        nw = 0
                    while nw != 0:
                        b = (wa << 6) + ctz64(nw)
                        nw &= nw - 1
                        if nfill == cap:
                            cap *= 2
                            fu_arr = np.resize(fu_arr, cap)
                            fv_arr = np.resize(fv_arr, cap)
                            fu = fu_arr
                            fv = fv_arr
                        fu[nfill] = a
                        fv[nfill] = b
                        nfill += 1
                    for w in range(wa + 1, words):
                        nw = nbrs[w] & ~rows[off + w]
                        while nw != 0:
                            b = (w << 6) + ctz64(nw)
                            nw &= nw - 1
                            if nfill == cap:
                                cap *= 2
                                fu_arr = np.resize(fu_arr, cap)
                                fv_arr = np.resize(fv_arr, cap)
                                fu = fu_arr
                                fv = fv_arr
                            fu[nfill] = a
                            fv[nfill] = b
                            nfill += 1
                    # merge the clique into row a, drop a itself and v
                    for w in range(words):
                        rows[off + w] |= nbrs[w]
                    rows[off + (a >> 6)] &= ~((<u64> 1) << (a & 63))
                    rows[off + (v >> 6)] &= ~((<u64> 1) << (v & 63))
            for w in range(words):
                rows[v * words + w] = 0
    finally:
        free(nbrs)
        free(rows)

    out_u = fu_arr[:nfill].copy()
    out_v = fv_arr[:nfill].copy()
    order = np.lexsort((out_v, out_u))
    return out_u[order], out_v[order], step_deg_arr


def fill_path_exists(n, indptr, indices, rank, i, j):
    cdef cnp.int64_t[::1] ip = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef cnp.int64_t[::1] ix = np.ascontiguousarray(indices, dtype=np.int64)
    cdef cnp.int64_t[::1] rk = np.ascontiguousarray(rank, dtype=np.int64)
    visited_arr = np.zeros(n, dtype=np.uint8)
    stack_arr = np.empty(n, dtype=np.int64)
    cdef cnp.uint8_t[::1] visited = visited_arr
    cdef cnp.int64_t[::1] stack = stack_arr
    return _fp_exists(n, ip, ix, rk, i, j, visited, stack, 1)


cdef int _fp_exists(Py_ssize_t n, cnp.int64_t[::1] ip, cnp.int64_t[::1] ix,
                    cnp.int64_t[::1] rk, Py_ssize_t i, Py_ssize_t j,
                    cnp.uint8_t[::1] visited, cnp.int64_t[::1] stack,
                    cnp.uint8_t stamp) nogil:
    cdef cnp.int64_t limit = rk[i] if rk[i] < rk[j] else rk[j]
    cdef Py_ssize_t top = 0
    cdef Py_ssize_t u, p, w
    visited[i] = stamp
    stack[top] = i
    top += 1
    while top > 0:
        top -= 1
        u = stack[top]
        for p in range(ip[u], ip[u + 1]):
            w = ix[p]
            if w == j:
                return 1
            if rk[w] < limit and visited[w] != stamp:
                visited[w] = stamp
                stack[top] = w
                top += 1
    return 0


def fill_path_set(n, indptr, indices, rank):
    cdef cnp.int64_t[::1] ip = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef cnp.int64_t[::1] ix = np.ascontiguousarray(indices, dtype=np.int64)
    cdef cnp.int64_t[::1] rk = np.ascontiguousarray(rank, dtype=np.int64)
    cdef Py_ssize_t nn = n

    visited_arr = np.zeros(nn, dtype=np.uint32)
    stack_arr = np.empty(nn if nn > 0 else 1, dtype=np.int64)
    cdef cnp.uint32_t[::1] visited = visited_arr
    cdef cnp.int64_t[::1] stack = stack_arr

    cdef Py_ssize_t cap = 1024
    fu_arr = np.empty(cap, dtype=np.int64)
    fv_arr = np.empty(cap, dtype=np.int64)
    cdef cnp.int64_t[::1] fu = fu_arr
    cdef cnp.int64_t[::1] fv = fv_arr
    cdef Py_ssize_t nout = 0

    cdef Py_ssize_t u, v, p
    cdef cnp.uint32_t stamp = 0
    cdef bint adjacent, hit
    cdef cnp.int64_t limit
    cdef Py_ssize_t top, q, w, x

    for u in range(nn):
        for v in range(u + 1, nn):
            adjacent = False
            for p in range(ip[u], ip[u + 1]):
                if ix[p] == v:
                    adjacent = True
                    break
            if adjacent:
                continue
            # restricted DFS from u towards v
            stamp += 1
            limit = rk[u] if rk[u] < rk[v] else rk[v]
            hit = False
            visited[u] = stamp
            stack[0] = u
            top = 1
            while top > 0 and not hit:
                top -= 1
                x = stack[top]
                for q in range(ip[x], ip[x + 1]):
                    w = ix[q]
                    if w == v:
                        hit = True
                        break
                    if rk[w] < limit and visited[w] != stamp:
                        visited[w] = stamp
                        stack[top] = w
                        top += 1
            if hit:
                if nout == cap:
                    cap *= 2
                    fu_arr = np.resize(fu_arr, cap)
                    fv_arr = np.resize(fv_arr, cap)
                    fu = fu_arr
                    fv = fv_arr
                fu[nout] = u
                fv[nout] = v
                nout += 1
    return fu_arr[:nout].copy(), fv_arr[:nout].copy()


def chol_factor_inplace(n, Lp, Li, Lx, up_ptr, up_col, up_pos):
    cdef cnp.int64_t[::1] lp = np.ascontiguousarray(Lp, dtype=np.int64)
    cdef cnp.int64_t[::1] li = np.ascontiguousarray(Li, dtype=np.int64)
    cdef cnp.float64_t[::1] lx = Lx
    cdef cnp.int64_t[::1] up = np.ascontiguousarray(up_ptr, dtype=np.int64)
    cdef cnp.int64_t[::1] uc = np.ascontiguousarray(up_col, dtype=np.int64)
    cdef cnp.int64_t[::1] upos = np.ascontiguousarray(up_pos, dtype=np.int64)

    work_arr = np.zeros(n, dtype=np.float64)
    cdef cnp.float64_t[::1] work = work_arr

    cdef Py_ssize_t k, p, q, j, i, start, end
    cdef double ljk, pivot, dkk
    for k in range(n):
        start = lp[k]
        end = lp[k + 1]
        for p in range(start, end):
            work[li[p]] = lx[p]
        for q in range(up[k], up[k + 1]):
            j = uc[q]
            ljk = lx[upos[q]]
            if ljk == 0.0:
                continue
            for p in range(lp[j], lp[j + 1]):
                i = li[p]
                if i >= k:
                    work[i] -= lx[p] * ljk
        pivot = work[k]
        if not pivot > 0.0:
            return k + 1
        dkk = sqrt(pivot)
        lx[start] = dkk
        for p in range(start + 1, end):
            lx[p] = work[li[p]] / dkk
        for p in range(start, end):
            work[li[p]] = 0.0
    return 0
