"""The two-stage reordering model and its self-supervised training.

Stage I produces a spectral embedding of the graph: coarsest-level seed
vectors are interpolated up the hierarchy through shared SAGE layers, then a
linear layer and Gram-Schmidt orthonormalization give two orthonormal
columns, one of which approximates the Fiedler vector. Stage II encodes those
features down and back up the hierarchy and emits one score per vertex;
higher score means eliminated earlier.

Supervision needs no labels: triplets (i, k, j) with non-adjacent endpoints
and k inside a witnessed i-j path are pushed, through a Bradley-Terry
objective on the end-max margin max(y_i, y_j) - y_k, toward orderings in
which some interior vertex outlives an endpoint, which is exactly what blocks
that path from generating fill.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .autodiff import AdamState, RowGroups, Tape, Tensor, adam_step, glorot_uniform
from .graph import AdjacencyGraph, Ordering, connected_components
from .hierarchy import CoarseningHierarchy, coarsen
from .orderings import ordering_from_scores
from .symbolic import eliminate

CHECKPOINT_MAGIC = "cfporder-checkpoint"
CHECKPOINT_VERSION = 1

DEFAULT_HIDDEN_DIM = 16
DEFAULT_LEARNING_RATE = 1e-5
DEFAULT_TRIPLETS_PER_VERTEX = 10
DEFAULT_WALK_CAP = 8
DEFAULT_RETRY_BUDGET = 16


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite; the caller should checkpoint and stop."""


# --------------------------------------------------------------------------
# model parameters


class CfpModel:
    """All learnable weights for both stages plus optimizer state.

    Layer weights are shared across hierarchy levels, so one parameter set
    serves graphs of any depth.
    """

    def __init__(self, hidden_dim: int = DEFAULT_HIDDEN_DIM, activation: str = "relu",
                 walk_cap: int = DEFAULT_WALK_CAP, retry_budget: int = DEFAULT_RETRY_BUDGET,
                 seed: int = 0):
        if activation not in ("relu", "tanh", "identity"):
            raise ValueError(f"unknown activation {activation!r}")
        self.hidden_dim = int(hidden_dim)
        self.activation = activation
        self.walk_cap = int(walk_cap)
        self.retry_budget = int(retry_budget)
        rng = np.random.default_rng(seed)
        h = self.hidden_dim
        self.params: dict[str, np.ndarray] = {}
        for name, (fi, fo) in (
            ("se.in.ws", (2, h)), ("se.in.wn", (2, h)),
            ("se.up.ws", (h, h)), ("se.up.wn", (h, h)),
            ("se.out.w", (h, 2)),
            ("enc.in.ws", (2, h)), ("enc.in.wn", (2, h)),
            ("enc.down.ws", (h, h)), ("enc.down.wn", (h, h)),
            ("enc.up.ws", (h, h)), ("enc.up.wn", (h, h)),
            ("enc.out.ws", (h, h)), ("enc.out.wn", (h, h)),
            ("enc.lin.w", (h, 1)),
        ):
            self.params[name] = glorot_uniform(rng, fi, fo)
        self.params["se.out.b"] = np.zeros((1, 2))
        self.params["enc.lin.b"] = np.zeros((1, 1))
        self.adam: dict[str, AdamState] = {}

    def stage_names(self, stage: str) -> list[str]:
        prefix = {"spectral": "se.", "encoder": "enc."}[stage]
        return [n for n in self.params if n.startswith(prefix)]

    def clone(self) -> "CfpModel":
        other = CfpModel(self.hidden_dim, self.activation, self.walk_cap, self.retry_budget)
        other.params = {k: v.copy() for k, v in self.params.items()}
        other.adam = {
            stage: AdamState(
                lr=st.lr, beta1=st.beta1, beta2=st.beta2, eps=st.eps,
                step_count=st.step_count,
                m={k: v.copy() for k, v in st.m.items()},
                v={k: v.copy() for k, v in st.v.items()},
            )
            for stage, st in self.adam.items()
        }
        return other


def _floats_to_line(row: np.ndarray) -> str:
    return " ".join(float(x).hex() for x in row)


def _line_to_floats(line: str) -> list[float]:
    return [float.fromhex(tok) for tok in line.split()]


def save_checkpoint(model: CfpModel, path: str) -> None:
    """Versioned text container: named matrices as hex float64, then the
    optimizer state. Byte-stable for identical models."""
    with open(path, "w") as fh:
        fh.write(f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\n")
        config = {
            "hidden_dim": model.hidden_dim,
            "activation": model.activation,
            "walk_cap": model.walk_cap,
            "retry_budget": model.retry_budget,
        }
        fh.write("config " + json.dumps(config, sort_keys=True) + "\n")
        for name, arr in model.params.items():
            fh.write(f"tensor {name} {arr.shape[0]} {arr.shape[1]}\n")
            for row in arr:
                fh.write(_floats_to_line(row) + "\n")
        for stage in sorted(model.adam):
            st = model.adam[stage]
            fh.write(
                f"adam {stage} {st.step_count} {float(st.lr).hex()} "
                f"{float(st.beta1).hex()} {float(st.beta2).hex()} {float(st.eps).hex()}\n"
            )
            for kind, table in (("m", st.m), ("v", st.v)):
                for name in table:
                    arr = table[name]
                    fh.write(f"atensor {stage} {kind} {name} {arr.shape[0]} {arr.shape[1]}\n")
                    for row in arr:
                        fh.write(_floats_to_line(row) + "\n")
        fh.write("end\n")


def load_checkpoint(path: str) -> CfpModel:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith(CHECKPOINT_MAGIC):
        raise ValueError("not a cfporder checkpoint")
    version = int(lines[0].split()[1])
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    if not lines[1].startswith("config "):
        raise ValueError("checkpoint missing config line")
    config = json.loads(lines[1][len("config "):])
    model = CfpModel(
        hidden_dim=config["hidden_dim"],
        activation=config["activation"],
        walk_cap=config.get("walk_cap", DEFAULT_WALK_CAP),
        retry_budget=config.get("retry_budget", DEFAULT_RETRY_BUDGET),
    )
    model.params = {}
    pos = 2

    def read_matrix(rows: int, cols: int, at: int) -> tuple[np.ndarray, int]:
        data = [_line_to_floats(lines[at + r]) for r in range(rows)]
        arr = np.asarray(data, dtype=np.float64).reshape(rows, cols)
        return arr, at + rows

    while pos < len(lines):
        line = lines[pos]
        if line == "end":
            break
        head = line.split()
        if head[0] == "tensor":
            _, name, r, c = head
            arr, pos = read_matrix(int(r), int(c), pos + 1)
            model.params[name] = arr
        elif head[0] == "adam":
            _, stage, step, lr, b1, b2, eps = head
            model.adam[stage] = AdamState(
                lr=float.fromhex(lr), beta1=float.fromhex(b1), beta2=float.fromhex(b2),
                eps=float.fromhex(eps), step_count=int(step),
            )
            pos += 1
        elif head[0] == "atensor":
            _, stage, kind, name, r, c = head
            arr, pos = read_matrix(int(r), int(c), pos + 1)
            table = model.adam[stage].m if kind == "m" else model.adam[stage].v
            table[name] = arr
        else:
            raise ValueError(f"unexpected checkpoint record {head[0]!r}")
    else:
        raise ValueError("checkpoint missing end marker")
    expected = set(CfpModel(hidden_dim=model.hidden_dim).params)
    if set(model.params) != expected:
        missing = sorted(expected - set(model.params))
        raise ValueError(f"checkpoint is missing parameters: {missing}")
    return model


# --------------------------------------------------------------------------
# forward passes


class HierarchyOps:
    """Index structures for running the networks over one hierarchy."""

    def __init__(self, hierarchy: CoarseningHierarchy):
        self.hierarchy = hierarchy
        self.neighbor_groups = [RowGroups.neighbor_groups(g) for g in hierarchy.graphs]
        self.cluster_groups = [
            RowGroups.cluster_groups(cmap, hierarchy.graphs[lvl + 1].n)
            for lvl, cmap in enumerate(hierarchy.cluster_maps)
        ]
        self.cluster_maps = hierarchy.cluster_maps
        self.edges = hierarchy.graphs[0].edge_array()
        self.n = hierarchy.graphs[0].n


def _param_tensors(model: CfpModel, trainable: set[str] | None = None) -> dict[str, Tensor]:
    trainable = trainable if trainable is not None else set(model.params)
    return {
        name: Tensor(arr, requires_grad=name in trainable)
        for name, arr in model.params.items()
    }


def _spectral_x(ops: HierarchyOps, pt: dict[str, Tensor], tape: Tape, activation: str) -> Tensor:
    coarse_n = ops.hierarchy.coarsest.n
    seed = np.eye(coarse_n, 2)  # [1,0] and [0,1]
    h = tape.sage_layer(tape.constant(seed), ops.neighbor_groups[-1],
                        pt["se.in.ws"], pt["se.in.wn"], activation)
    for lvl in range(ops.hierarchy.depth - 1, 0, -1):
        h = tape.gather_rows(h, ops.cluster_maps[lvl - 1])
        h = tape.sage_layer(h, ops.neighbor_groups[lvl - 1],
                            pt["se.up.ws"], pt["se.up.wn"], activation)
    z = tape.add(tape.matmul(h, pt["se.out.w"]), tape.broadcast_rows(pt["se.out.b"], ops.n))
    return tape.orthonormalize(z)


def _column_rayleigh(x: np.ndarray, edges: np.ndarray) -> np.ndarray:
    if not len(edges):
        return np.zeros(x.shape[1])
    d = x[edges[:, 0]] - x[edges[:, 1]]
    return np.sum(d * d, axis=0)


def _fiedler_from_x(ops: HierarchyOps, x: Tensor, tape: Tape) -> tuple[Tensor, int]:
    """Pick the column farther (in Rayleigh quotient) from the constant
    direction, project out the all-ones component, renormalize."""
    ray = _column_rayleigh(x.data, ops.edges)
    col = int(np.argmax(ray))
    picked = tape.slice_cols(x, col, col + 1)
    ones = tape.constant(np.ones((ops.n, 1)))
    mean = tape.scale(tape.matmul(tape.transpose(ones), picked), 1.0 / ops.n)
    proj = tape.add(picked, tape.scale(tape.matmul(ones, mean), -1.0))
    nsq = tape.matmul(tape.transpose(proj), proj)
    if float(nsq.data[0, 0]) < 1e-18:
        raise ValueError("degenerate spectral output: projection leaves a near-zero vector")
    fied = tape.mul(proj, tape.broadcast_rows(tape.power(nsq, -0.5), ops.n))
    return fied, col


def spectral_embed(model: CfpModel, graph: AdjacencyGraph,
                   hierarchy: CoarseningHierarchy) -> tuple[np.ndarray, np.ndarray]:
    """Stage I inference: (n x 2 orthonormal features, n-vector Fiedler
    approximation)."""
    if graph.n < 2:
        raise ValueError("spectral embedding needs at least two vertices")
    ops = HierarchyOps(hierarchy)
    tape = Tape()
    pt = _param_tensors(model, trainable=set())
    x = _spectral_x(ops, pt, tape, model.activation)
    fied, _ = _fiedler_from_x(ops, x, tape)
    return x.data.copy(), fied.data[:, 0].copy()


def _encoder_scores(ops: HierarchyOps, pt: dict[str, Tensor], x: Tensor,
                    tape: Tape, activation: str) -> Tensor:
    h = tape.sage_layer(x, ops.neighbor_groups[0], pt["enc.in.ws"], pt["enc.in.wn"], activation)
    downs = [h]
    for lvl in range(ops.hierarchy.depth - 1):
        coarse = tape.mean_rows(h, ops.cluster_groups[lvl])
        h = tape.sage_layer(coarse, ops.neighbor_groups[lvl + 1],
                            pt["enc.down.ws"], pt["enc.down.wn"], activation)
        downs.append(h)
    g = downs[-1]
    for lvl in range(ops.hierarchy.depth - 1, 0, -1):
        fine = tape.gather_rows(g, ops.cluster_maps[lvl - 1])
        g = tape.sage_layer(tape.add(fine, downs[lvl - 1]), ops.neighbor_groups[lvl - 1],
                            pt["enc.up.ws"], pt["enc.up.wn"], activation)
    z = tape.sage_layer(g, ops.neighbor_groups[0], pt["enc.out.ws"], pt["enc.out.wn"], activation)
    return tape.add(tape.matmul(z, pt["enc.lin.w"]), tape.broadcast_rows(pt["enc.lin.b"], ops.n))


def vertex_scores(model: CfpModel, graph: AdjacencyGraph, hierarchy: CoarseningHierarchy,
                  x: np.ndarray) -> np.ndarray:
    """Stage II inference: one scalar score per vertex from the stage-I
    features."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (graph.n, 2):
        raise ValueError(f"expected features of shape ({graph.n}, 2), got {x.shape}")
    ops = HierarchyOps(hierarchy)
    tape = Tape()
    pt = _param_tensors(model, trainable=set())
    y = _encoder_scores(ops, pt, tape.constant(x), tape, model.activation)
    return y.data[:, 0].copy()


def reorder_cfp(model: CfpModel, graph: AdjacencyGraph, seed: int = 0) -> Ordering:
    """Single-shot reordering: spectral embedding, vertex scores, sort."""
    if graph.n < 2:
        return Ordering.identity(graph.n)
    hierarchy = coarsen(graph, np.random.default_rng(seed))
    ops = HierarchyOps(hierarchy)
    tape = Tape()
    pt = _param_tensors(model, trainable=set())
    x = _spectral_x(ops, pt, tape, model.activation)
    y = _encoder_scores(ops, pt, tape.constant(x.data), tape, model.activation)
    return ordering_from_scores(y.data[:, 0])


# --------------------------------------------------------------------------
# triplets and losses


@dataclass(frozen=True)
class Triplet:
    """Endpoints i, j (non-adjacent) and an interior vertex k of the stored
    witness path."""

    i: int
    k: int
    j: int
    witness: tuple

    def __iter__(self):
        return iter((self.i, self.k, self.j))


def triplet_is_eligible(graph: AdjacencyGraph, t: Triplet) -> bool:
    """Independent verifier: endpoints distinct and non-adjacent, witness a
    simple path from i to j in the graph, k strictly inside it."""
    if len({t.i, t.k, t.j}) != 3:
        return False
    if graph.has_edge(t.i, t.j):
        return False
    w = t.witness
    if len(w) < 3 or w[0] != t.i or w[-1] != t.j:
        return False
    if len(set(w)) != len(w):
        return False
    if t.k not in w[1:-1]:
        return False
    return all(graph.has_edge(a, b) for a, b in zip(w, w[1:]))


def sample_triplets(graph: AdjacencyGraph, count: int, rng: np.random.Generator,
                    walk_cap: int = DEFAULT_WALK_CAP,
                    retry_budget: int = DEFAULT_RETRY_BUDGET) -> list[Triplet]:
    """Path-first sampling: a self-avoiding random walk supplies the witness,
    which guarantees eligibility by construction.

    May return fewer than ``count`` triplets when attempts keep failing, e.g.
    on complete graphs, which admit none.
    """
    if count < 1:
        raise ValueError("triplet count must be positive")
    n = graph.n
    out: list[Triplet] = []
    if n < 3:
        return out
    adj_list = [[int(w) for w in graph.neighbors(v)] for v in range(n)]
    adj_set = [set(row) for row in adj_list]
    integers = rng.integers
    for _ in range(count):
        for _attempt in range(retry_budget):
            walk = [int(integers(n))]
            visited = {walk[0]}
            while len(walk) <= walk_cap:
                cands = [w for w in adj_list[walk[-1]] if w not in visited]
                if not cands:
                    break
                nxt = cands[int(integers(len(cands)))]
                walk.append(nxt)
                visited.add(nxt)
            if len(walk) < 3:
                continue
            pairs = [
                (a, b)
                for a in range(len(walk) - 2)
                for b in range(a + 2, len(walk))
                if walk[b] not in adj_set[walk[a]]
            ]
            if not pairs:
                continue
            a, b = pairs[int(integers(len(pairs)))]
            kpos = a + 1 + int(integers(b - a - 1))
            out.append(Triplet(i=walk[a], k=walk[kpos], j=walk[b],
                               witness=tuple(walk[a:b + 1])))
            break
    return out


def end_max_margin(y: np.ndarray, t: Triplet) -> float:
    """max(y_i, y_j) - y_k; positive when the interior vertex is scored for
    later elimination than at least one endpoint."""
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    return float(max(y[t.i], y[t.j]) - y[t.k])


def bce_with_logits(m):
    """max(m, 0) - m + log(1 + exp(-|m|)), i.e. -log sigmoid(m), stable at
    any magnitude."""
    m = np.asarray(m, dtype=np.float64)
    out = np.maximum(m, 0.0) - m + np.log1p(np.exp(-np.abs(m)))
    return float(out) if out.ndim == 0 else out


def end_max_chain_loss(y: np.ndarray, triplets) -> float:
    """Mean Bradley-Terry negative log-likelihood of the end-max margins."""
    triplets = list(triplets)
    if not triplets:
        raise ValueError("no triplets: the graph admits none; skip it")
    margins = np.array([end_max_margin(y, t) for t in triplets])
    return float(np.mean(bce_with_logits(margins)))


def _chain_loss_tensor(tape: Tape, y: Tensor, triplets: list[Triplet]) -> Tensor:
    i_idx = np.array([t.i for t in triplets], dtype=np.int64)
    k_idx = np.array([t.k for t in triplets], dtype=np.int64)
    j_idx = np.array([t.j for t in triplets], dtype=np.int64)
    yi = tape.gather_rows(y, i_idx)
    yj = tape.gather_rows(y, j_idx)
    yk = tape.gather_rows(y, k_idx)
    margin = tape.add(tape.maximum(yi, yj), tape.scale(yk, -1.0))
    return tape.mean_all(tape.softplus(tape.scale(margin, -1.0)))


# --------------------------------------------------------------------------
# training


def _collect_grads(model: CfpModel, pt: dict[str, Tensor], names: list[str]) -> dict[str, np.ndarray]:
    grads = {}
    for name in names:
        g = pt[name].grad
        grads[name] = g if g is not None else np.zeros_like(model.params[name])
    return grads


def _adam_for(model: CfpModel, stage: str, lr: float) -> AdamState:
    state = model.adam.get(stage)
    if state is None:
        state = AdamState(lr=lr)
        model.adam[stage] = state
    else:
        state.lr = lr
    return state


def _rayleigh_loss(ops: HierarchyOps, fied: Tensor, tape: Tape) -> Tensor:
    us = ops.edges[:, 0]
    vs = ops.edges[:, 1]
    du = tape.gather_rows(fied, us)
    dv = tape.gather_rows(fied, vs)
    d = tape.add(du, tape.scale(dv, -1.0))
    return tape.sum_all(tape.mul(d, d))


def train_spectral(model: CfpModel, graphs: list[AdjacencyGraph], epochs: int,
                   lr: float = 1e-2, rng: np.random.Generator | None = None,
                   log_cb=None) -> list[float]:
    """Minimize the deflated Rayleigh quotient of the Fiedler column over the
    training graphs. Requires connected graphs with n >= 2."""
    rng = rng if rng is not None else np.random.default_rng(0)
    for g in graphs:
        if g.n < 2:
            raise ValueError("spectral training needs graphs with at least two vertices")
        if connected_components(g).max() != 0:
            raise ValueError("spectral training needs connected graphs")
    all_ops = [HierarchyOps(coarsen(g, rng)) for g in graphs]
    state = _adam_for(model, "spectral", lr)
    names = model.stage_names("spectral")
    history: list[float] = []
    for epoch in range(epochs):
        losses = []
        for ops in all_ops:
            tape = Tape()
            pt = _param_tensors(model, trainable=set(names))
            x = _spectral_x(ops, pt, tape, model.activation)
            fied, _ = _fiedler_from_x(ops, x, tape)
            loss = _rayleigh_loss(ops, fied, tape)
            value = float(loss.data[0, 0])
            if not np.isfinite(value):
                raise TrainingDivergedError(f"spectral loss diverged at epoch {epoch}")
            tape.backward(loss)
            adam_step({n: model.params[n] for n in names}, _collect_grads(model, pt, names), state)
            losses.append(value)
        mean_loss = float(np.mean(losses))
        history.append(mean_loss)
        if log_cb is not None:
            log_cb(epoch, mean_loss)
    return history


def train_cfp(model: CfpModel, graphs: list[AdjacencyGraph], epochs: int,
              lr: float = DEFAULT_LEARNING_RATE,
              t_multiplier: int = DEFAULT_TRIPLETS_PER_VERTEX,
              rng: np.random.Generator | None = None,
              fir_every: int = 0, log_cb=None) -> list[tuple[int, float, float | None]]:
    """Stage II: train encoder parameters against the end-max chain loss with
    stage-I parameters frozen. Returns (epoch, mean loss, mean FIR or None)
    rows; FIR is measured every ``fir_every`` epochs when positive."""
    rng = rng if rng is not None else np.random.default_rng(0)
    all_ops = [HierarchyOps(coarsen(g, rng)) for g in graphs]

    # stage I is frozen, so the features are fixed for the whole run
    features: list[np.ndarray] = []
    for g, ops in zip(graphs, all_ops):
        if g.n < 2:
            raise ValueError("training needs graphs with at least two vertices")
        tape = Tape()
        pt = _param_tensors(model, trainable=set())
        features.append(_spectral_x(ops, pt, tape, model.activation).data)

    state = _adam_for(model, "encoder", lr)
    names = model.stage_names("encoder")
    history: list[tuple[int, float, float | None]] = []
    for epoch in range(epochs):
        losses = []
        orderings: list[Ordering] = []
        for g, ops, x in zip(graphs, all_ops, features):
            triplets = sample_triplets(g, t_multiplier * g.n, rng,
                                       walk_cap=model.walk_cap,
                                       retry_budget=model.retry_budget)
            if not triplets:
                continue
            tape = Tape()
            pt = _param_tensors(model, trainable=set(names))
            y = _encoder_scores(ops, pt, tape.constant(x), tape, model.activation)
            loss = _chain_loss_tensor(tape, y, triplets)
            value = float(loss.data[0, 0])
            if not np.isfinite(value):
                raise TrainingDivergedError(f"chain loss diverged at epoch {epoch}")
            tape.backward(loss)
            adam_step({n: model.params[n] for n in names}, _collect_grads(model, pt, names), state)
            losses.append(value)
            if fir_every and (epoch % fir_every == 0 or epoch == epochs - 1):
                orderings.append(ordering_from_scores(y.data[:, 0]))
        mean_fir = None
        if orderings and len(orderings) == len(graphs):
            firs = []
            for g, o in zip(graphs, orderings):
                report = eliminate(g, o)
                base = g.n + 2 * g.m
                firs.append((report.nnz_factor_full - base) / base)
            mean_fir = float(np.mean(firs))
        mean_loss = float(np.mean(losses)) if losses else float("nan")
        history.append((epoch, mean_loss, mean_fir))
        if log_cb is not None:
            log_cb(epoch, mean_loss, mean_fir)
    return history
