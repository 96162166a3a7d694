#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-Python fallback.

Runs the three hot loops (elimination game, all-pairs fill-path oracle,
numeric Cholesky) on grids and random graphs and prints one table row per
case. The oracle is quadratic, so it only runs at the small sizes.

Usage: python benchmarks/bench_kernels.py [--quick]
"""

import argparse
import time

import numpy as np

from cfporder import _kernels_py
from cfporder.graph import AdjacencyGraph, Ordering
from cfporder.generators import pattern_from_graph
from cfporder.symbolic import laplacian_plus_identity

try:
    from cfporder import _kernels_cy
except ImportError:
    _kernels_cy = None


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


def erdos(n, p, rng):
    mask = rng.random((n, n)) < p
    return AdjacencyGraph.from_edges(n, [(i, j) for i in range(n) for j in range(i + 1, n) if mask[i, j]])


def best_of(fn, repeats=3):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_eliminate(kern, g, seq):
    return best_of(lambda: kern.eliminate_fill(g.n, g.indptr, g.indices, seq))


def bench_oracle(kern, g, rank):
    return best_of(lambda: kern.fill_path_set(g.n, g.indptr, g.indices, rank), repeats=1)


def chol_inputs(g, ordering):
    from cfporder import symbolic

    pattern = pattern_from_graph(g)
    values = laplacian_plus_identity(pattern)
    return pattern, values, ordering


def bench_chol(kern, pattern, values, ordering):
    import cfporder.symbolic as sym

    saved = sym.kernels
    sym.kernels = kern
    try:
        return best_of(lambda: sym.numeric_cholesky(pattern, values, ordering, verify_limit=0), repeats=1)
    finally:
        sym.kernels = saved


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--quick", action="store_true", help="smaller sizes")
    args = parser.parse_args()

    if _kernels_cy is None:
        print("compiled kernels unavailable; rebuild with the extension to compare")

    rng = np.random.default_rng(0)
    if args.quick:
        cases = [("grid 15x15", grid_graph(15, 15)), ("erdos n=120 p=0.05", erdos(120, 0.05, rng))]
        oracle_cap = 150
    else:
        cases = [
            ("grid 20x20", grid_graph(20, 20)),
            ("grid 40x40", grid_graph(40, 40)),
            ("erdos n=300 p=0.02", erdos(300, 0.02, rng)),
            ("erdos n=800 p=0.005", erdos(800, 0.005, rng)),
        ]
        oracle_cap = 320

    header = f"{'case':<22} {'kernel':<22} {'python':>10} {'cython':>10} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for name, g in cases:
        seq = rng.permutation(g.n).astype(np.int64)
        rank = np.empty(g.n, dtype=np.int64)
        rank[seq] = np.arange(g.n)

        rows = []
        t_py, out_py = bench_eliminate(_kernels_py, g, seq)
        if _kernels_cy is not None:
            t_cy, out_cy = bench_eliminate(_kernels_cy, g, seq)
            assert np.array_equal(out_py[0], out_cy[0]) and np.array_equal(out_py[1], out_cy[1])
        else:
            t_cy = float("nan")
        rows.append(("elimination game", t_py, t_cy))

        if g.n <= oracle_cap:
            t_py, out_py = bench_oracle(_kernels_py, g, rank)
            if _kernels_cy is not None:
                t_cy, out_cy = bench_oracle(_kernels_cy, g, rank)
                assert np.array_equal(out_py[0], out_cy[0])
            else:
                t_cy = float("nan")
            rows.append(("fill-path oracle", t_py, t_cy))

        pattern, values, ordering = chol_inputs(g, Ordering(seq))
        t_py, _ = bench_chol(_kernels_py, pattern, values, ordering)
        if _kernels_cy is not None:
            t_cy, _ = bench_chol(_kernels_cy, pattern, values, ordering)
        else:
            t_cy = float("nan")
        rows.append(("numeric cholesky", t_py, t_cy))

        for kern_name, t_py, t_cy in rows:
            ratio = t_py / t_cy if t_cy == t_cy and t_cy > 0 else float("nan")
            print(f"{name:<22} {kern_name:<22} {t_py*1e3:>8.1f}ms {t_cy*1e3:>8.1f}ms {ratio:>7.1f}x")


if __name__ == "__main__":
    main()
