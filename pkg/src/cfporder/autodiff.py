"""Minimal reverse-mode differentiation: exactly the operations the ordering
networks need, on 2-D float64 arrays, plus Adam.

A Tape records one forward pass; ``backward`` replays it in reverse and
accumulates exact vector-Jacobian products. Nothing here mutates its inputs,
and identical inputs give bit-identical primals and gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class Tensor:
    """A 2-D float64 matrix tracked on a tape."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"tensors are 2-D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("tensor holds non-finite entries")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.data.shape

    def _bump(self, delta: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += delta


class RowGroups:
    """Index lists for grouped row means; a row may appear in any number of
    groups and empty groups mean a zero output row."""

    __slots__ = ("indptr", "indices", "seg_ids", "counts")

    def __init__(self, indptr: np.ndarray, indices: np.ndarray):
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int64)
        counts = np.diff(self.indptr)
        self.counts = np.maximum(counts, 1).astype(np.float64)
        self.seg_ids = np.repeat(np.arange(len(counts), dtype=np.int64), counts)

    @classmethod
    def from_lists(cls, groups) -> "RowGroups":
        indptr = np.zeros(len(groups) + 1, dtype=np.int64)
        chunks = []
        for g, members in enumerate(groups):
            indptr[g + 1] = indptr[g] + len(members)
            chunks.extend(int(v) for v in members)
        return cls(indptr, np.asarray(chunks, dtype=np.int64))

    @classmethod
    def neighbor_groups(cls, graph) -> "RowGroups":
        return cls(graph.indptr, graph.indices)

    @classmethod
    def cluster_groups(cls, cmap: np.ndarray, coarse_n: int) -> "RowGroups":
        order = np.argsort(cmap, kind="stable")
        indptr = np.zeros(coarse_n + 1, dtype=np.int64)
        np.add.at(indptr, np.asarray(cmap, dtype=np.int64) + 1, 1)
        np.cumsum(indptr, out=indptr)
        return cls(indptr, order.astype(np.int64))

    @property
    def n_groups(self) -> int:
        return len(self.indptr) - 1


class Tape:
    """Records primal operations; ``backward`` visits them once, in reverse."""

    def __init__(self):
        self._records: list = []

    def _emit(self, out: Tensor, backward) -> Tensor:
        self._records.append((out, backward))
        return out

    def backward(self, loss: Tensor) -> None:
        if loss.shape != (1, 1):
            raise ValueError("backward starts from a 1x1 loss tensor")
        loss.grad = np.ones((1, 1))
        for out, fn in reversed(self._records):
            if out.grad is not None:
                fn(out.grad)

    # ---- primitives -----------------------------------------------------

    def constant(self, data) -> Tensor:
        return Tensor(data, requires_grad=False)

    def param(self, data) -> Tensor:
        return Tensor(data, requires_grad=True)

    def matmul(self, a: Tensor, b: Tensor) -> Tensor:
        if a.shape[1] != b.shape[0]:
            raise ValueError(f"matmul shapes {a.shape} x {b.shape}")
        out = Tensor(a.data @ b.data)

        def backward(g):
            a._bump(g @ b.data.T)
            b._bump(a.data.T @ g)

        return self._emit(out, backward)

    def add(self, a: Tensor, b: Tensor) -> Tensor:
        if a.shape != b.shape:
            raise ValueError(f"add shapes {a.shape} vs {b.shape}")
        out = Tensor(a.data + b.data)

        def backward(g):
            a._bump(g)
            b._bump(g)

        return self._emit(out, backward)

    def scale(self, a: Tensor, c: float) -> Tensor:
        c = float(c)
        out = Tensor(a.data * c)

        def backward(g):
            a._bump(g * c)

        return self._emit(out, backward)

    def mul(self, a: Tensor, b: Tensor) -> Tensor:
        if a.shape != b.shape:
            raise ValueError(f"mul shapes {a.shape} vs {b.shape}")
        out = Tensor(a.data * b.data)

        def backward(g):
            a._bump(g * b.data)
            b._bump(g * a.data)

        return self._emit(out, backward)

    def relu(self, a: Tensor) -> Tensor:
        mask = a.data > 0
        out = Tensor(np.where(mask, a.data, 0.0))

        def backward(g):
            a._bump(g * mask)

        return self._emit(out, backward)

    def tanh(self, a: Tensor) -> Tensor:
        t = np.tanh(a.data)
        out = Tensor(t)

        def backward(g):
            a._bump(g * (1.0 - t * t))

        return self._emit(out, backward)

    def softplus(self, a: Tensor) -> Tensor:
        x = a.data
        out = Tensor(np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x))))
        sig = 0.5 * (1.0 + np.tanh(0.5 * x))

        def backward(g):
            a._bump(g * sig)

        return self._emit(out, backward)

    def power(self, a: Tensor, p: float) -> Tensor:
        p = float(p)
        if p != int(p) or p < 0:
            if np.any(a.data <= 0):
                raise ValueError("fractional or negative powers need positive entries")
        out = Tensor(np.power(a.data, p))
        da = p * np.power(a.data, p - 1.0)

        def backward(g):
            a._bump(g * da)

        return self._emit(out, backward)

    def transpose(self, a: Tensor) -> Tensor:
        out = Tensor(a.data.T.copy())

        def backward(g):
            a._bump(g.T)

        return self._emit(out, backward)

    def sum_all(self, a: Tensor) -> Tensor:
        out = Tensor([[float(np.sum(a.data))]])

        def backward(g):
            a._bump(np.full_like(a.data, g[0, 0]))

        return self._emit(out, backward)

    def gather_rows(self, a: Tensor, idx: np.ndarray) -> Tensor:
        idx = np.asarray(idx, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= a.shape[0]):
            raise ValueError("gather index out of range")
        out = Tensor(a.data[idx])

        def backward(g):
            da = np.zeros_like(a.data)
            np.add.at(da, idx, g)
            a._bump(da)

        return self._emit(out, backward)

    def mean_rows(self, a: Tensor, groups: RowGroups) -> Tensor:
        if groups.indices.size and groups.indices.max() >= a.shape[0]:
            raise ValueError("group member out of range")
        summed = np.zeros((groups.n_groups, a.shape[1]))
        np.add.at(summed, groups.seg_ids, a.data[groups.indices])
        out = Tensor(summed / groups.counts[:, None])

        def backward(g):
            scaled = g / groups.counts[:, None]
            da = np.zeros_like(a.data)
            np.add.at(da, groups.indices, scaled[groups.seg_ids])
            a._bump(da)

        return self._emit(out, backward)

    def concat_cols(self, a: Tensor, b: Tensor) -> Tensor:
        if a.shape[0] != b.shape[0]:
            raise ValueError(f"concat_cols rows {a.shape[0]} vs {b.shape[0]}")
        out = Tensor(np.hstack([a.data, b.data]))
        ca = a.shape[1]

        def backward(g):
            a._bump(g[:, :ca])
            b._bump(g[:, ca:])

        return self._emit(out, backward)

    def slice_cols(self, a: Tensor, j0: int, j1: int) -> Tensor:
        if not 0 <= j0 < j1 <= a.shape[1]:
            raise ValueError(f"column slice [{j0}, {j1}) out of range for {a.shape}")
        out = Tensor(a.data[:, j0:j1].copy())

        def backward(g):
            da = np.zeros_like(a.data)
            da[:, j0:j1] = g
            a._bump(da)

        return self._emit(out, backward)

    # ---- composites ------------------------------------------------------

    def mean_all(self, a: Tensor) -> Tensor:
        return self.scale(self.sum_all(a), 1.0 / a.data.size)

    def maximum(self, a: Tensor, b: Tensor) -> Tensor:
        """Elementwise max as relu(a - b) + b; ties route gradient to b."""
        return self.add(self.relu(self.add(a, self.scale(b, -1.0))), b)

    def activation(self, a: Tensor, kind: str) -> Tensor:
        if kind == "relu":
            return self.relu(a)
        if kind == "tanh":
            return self.tanh(a)
        if kind == "identity":
            return a
        raise ValueError(f"unknown activation {kind!r}")

    def broadcast_rows(self, row: Tensor, n: int) -> Tensor:
        """Tile a 1 x d row to n x d via a constant ones column."""
        ones = self.constant(np.ones((n, 1)))
        return self.matmul(ones, row)

    def sage_layer(
        self,
        features: Tensor,
        neighbor_groups: RowGroups,
        w_self: Tensor,
        w_neigh: Tensor,
        activation: str = "identity",
    ) -> Tensor:
        """out(v) = act(W_self h(v) + W_neigh mean_{u ~ v} h(u)); isolated
        vertices see a zero neighbor mean."""
        if features.shape[0] != neighbor_groups.n_groups:
            raise ValueError("feature rows must match the vertex count")
        agg = self.mean_rows(features, neighbor_groups)
        pre = self.add(self.matmul(features, w_self), self.matmul(agg, w_neigh))
        return self.activation(pre, activation)

    def orthonormalize(self, z: Tensor) -> Tensor:
        """Differentiable Gram-Schmidt on two columns; signs fixed so the
        first nonzero entry of each column is positive."""
        if z.shape[1] != 2 or z.shape[0] < 2:
            raise ValueError(f"orthonormalize expects an n x 2 input with n >= 2, got {z.shape}")
        n = z.shape[0]
        v1 = self.slice_cols(z, 0, 1)
        v2 = self.slice_cols(z, 1, 2)
        n1sq = self.matmul(self.transpose(v1), v1)
        if float(n1sq.data[0, 0]) < 1e-24:
            raise ValueError("rank-deficient input: first column is numerically zero")
        q1 = self.mul(v1, self.broadcast_rows(self.power(n1sq, -0.5), n))
        coeff = self.matmul(self.transpose(q1), v2)
        u2 = self.add(v2, self.scale(self.matmul(q1, coeff), -1.0))
        n2sq = self.matmul(self.transpose(u2), u2)
        if float(n2sq.data[0, 0]) < 1e-24:
            raise ValueError("rank-deficient input: columns are numerically dependent")
        q2 = self.mul(u2, self.broadcast_rows(self.power(n2sq, -0.5), n))
        q1 = self.scale(q1, _column_sign(q1.data))
        q2 = self.scale(q2, _column_sign(q2.data))
        return self.concat_cols(q1, q2)


def _column_sign(col: np.ndarray) -> float:
    nz = np.flatnonzero(np.abs(col[:, 0]) > 1e-12)
    if len(nz) and col[nz[0], 0] < 0:
        return -1.0
    return 1.0


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


@dataclass
class AdamState:
    """First/second moment estimates plus the shared step counter."""

    lr: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState) -> tuple[dict, AdamState]:
    """One bias-corrected Adam update, in place on ``params``."""
    state.step_count += 1
    t = state.step_count
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} mismatches parameter {name} {p.shape}")
        if not np.all(np.isfinite(g)):
            raise ValueError(f"non-finite gradient for parameter {name}")
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m += (1.0 - state.beta1) * (g - m)
        v += (1.0 - state.beta2) * (g * g - v)
        mhat = m / (1.0 - state.beta1**t)
        vhat = v / (1.0 - state.beta2**t)
        p -= state.lr * mhat / (np.sqrt(vhat) + state.eps)
    return params, state
