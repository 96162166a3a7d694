"""Command-line surface: reorder, evaluate, train, compare, verify.

Exit codes: 0 success, 1 usage error, 2 data error, 3 verification failure.
All non-timing output is byte-reproducible for a fixed --seed; the default
seed can also come from the CFPORDER_SEED environment variable.
"""

from __future__ import annotations

import argparse
import csv
import glob as globmod
import os
import sys
import time
from dataclasses import dataclass, fields

import numpy as np

from . import model as cfp
from ._backend import backend_name
from .generators import erdos_pattern, grid_pattern, path_pattern, star_pattern
from .graph import AdjacencyGraph, Ordering, build_adjacency_graph
from .mmio import ParseError, SparseSymmetricPattern, parse_matrix_market, parse_permutation, write_permutation
from .orderings import (
    fiedler_ordering,
    minimum_degree,
    natural_ordering,
    nested_dissection,
    reverse_cuthill_mckee,
)
from .symbolic import (
    NotPositiveDefiniteError,
    bandwidth,
    eliminate,
    fill_in_ratio,
    fill_set_via_paths,
    laplacian_plus_identity,
    numeric_cholesky,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_VERIFY = 3

METHODS = ("natural", "rcm", "md", "nd", "fiedler", "cfp")

CSV_HEADER = [
    "matrix", "n", "nnz_full", "method", "fir", "bandwidth", "flops",
    "reorder_time", "factor_time", "speedup", "error",
]


class DataError(Exception):
    """Bad file content or mismatched inputs."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


@dataclass
class EvaluationRecord:
    matrix: str
    n: int
    nnz_full: int
    method: str
    fir: float | None = None
    bandwidth: int | None = None
    flops: int | None = None
    reorder_time: float | None = None
    factor_time: float | None = None
    speedup: float | None = None
    error: str = ""

    def csv_row(self) -> list[str]:
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                out.append("")
            elif isinstance(v, float):
                out.append(repr(v))
            else:
                out.append(str(v))
        return out

    @classmethod
    def from_csv_row(cls, row: list[str]) -> "EvaluationRecord":
        names = [f.name for f in fields(cls)]
        kw = dict(zip(names, row))
        for key in ("fir", "reorder_time", "factor_time", "speedup"):
            kw[key] = float(kw[key]) if kw[key] else None
        for key in ("n", "nnz_full"):
            kw[key] = int(kw[key]) if kw[key] else 0
        for key in ("bandwidth", "flops"):
            kw[key] = int(kw[key]) if kw[key] else None
        return cls(**kw)


def _default_seed() -> int:
    return int(os.environ.get("CFPORDER_SEED", "0"))


def _read_pattern(path: str) -> SparseSymmetricPattern:
    try:
        with open(path) as fh:
            return parse_matrix_market(fh)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except ParseError as exc:
        raise DataError(f"{path}: {exc}") from exc


def _compute_ordering(method: str, graph: AdjacencyGraph, seed: int,
                      model: cfp.CfpModel | None) -> Ordering:
    if method == "natural":
        return natural_ordering(graph)
    if method == "rcm":
        return reverse_cuthill_mckee(graph)
    if method == "md":
        return minimum_degree(graph)
    if method == "nd":
        return nested_dissection(graph)
    if method == "fiedler":
        return fiedler_ordering(graph)
    if method == "cfp":
        if model is None:
            raise DataError("method 'cfp' needs a trained checkpoint (--model)")
        return cfp.reorder_cfp(model, graph, seed=seed)
    raise DataError(f"unknown method {method!r}")


def _evaluate(pattern: SparseSymmetricPattern, ordering: Ordering, matrix_name: str,
              method: str, numeric: bool, reorder_time: float | None) -> EvaluationRecord:
    graph = build_adjacency_graph(pattern)
    report = eliminate(graph, ordering)
    rec = EvaluationRecord(
        matrix=matrix_name,
        n=pattern.n,
        nnz_full=pattern.nnz_full(),
        method=method,
        fir=fill_in_ratio(report, pattern),
        bandwidth=bandwidth(graph, ordering),
        flops=report.flops,
        reorder_time=reorder_time,
    )
    if numeric:
        full, _added = pattern.with_full_diagonal()
        values = laplacian_plus_identity(full)
        natural_factor = numeric_cholesky(full, values, Ordering.identity(full.n))
        factor = numeric_cholesky(full, values, ordering)
        rec.factor_time = factor.elapsed_seconds
        rec.speedup = natural_factor.elapsed_seconds / ((reorder_time or 0.0) + factor.elapsed_seconds)
    return rec


# --------------------------------------------------------------------------
# subcommands


def _cmd_reorder(args) -> int:
    pattern = _read_pattern(args.input)
    graph = build_adjacency_graph(pattern)
    model = None
    if args.method == "cfp":
        if not args.model:
            print("error: --model is required for method 'cfp'", file=sys.stderr)
            return EXIT_USAGE
        try:
            model = cfp.load_checkpoint(args.model)
        except (OSError, ValueError) as exc:
            raise DataError(f"cannot load checkpoint {args.model}: {exc}") from exc
        if args.finetune_epochs:
            model = model.clone()
            cfp.train_cfp(model, [graph], epochs=args.finetune_epochs, lr=args.finetune_lr,
                          rng=np.random.default_rng(args.seed))
    t0 = time.perf_counter()
    ordering = _compute_ordering(args.method, graph, args.seed, model)
    elapsed = time.perf_counter() - t0
    with open(args.out, "w") as fh:
        write_permutation(ordering, fh)
    print(f"n={graph.n} m={graph.m} method={args.method} wall_time={elapsed:.6f}s")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    pattern = _read_pattern(args.input)
    try:
        with open(args.permutation) as fh:
            ordering = parse_permutation(fh)
    except OSError as exc:
        raise DataError(f"cannot read {args.permutation}: {exc}") from exc
    except (ParseError, ValueError) as exc:
        raise DataError(f"{args.permutation}: {exc}") from exc
    if len(ordering) != pattern.n:
        raise DataError(
            f"permutation has {len(ordering)} entries but the matrix has {pattern.n} rows"
        )
    rec = _evaluate(pattern, ordering, os.path.basename(args.input), args.method_label,
                    args.numeric, args.reorder_time)
    sink = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(sink)
        writer.writerow(CSV_HEADER)
        writer.writerow(rec.csv_row())
    finally:
        if args.out:
            sink.close()
    return EXIT_OK


def _cmd_train(args) -> int:
    if not 0.0 < args.lr <= 1.0:
        print("error: --lr must lie in (0, 1]", file=sys.stderr)
        return EXIT_USAGE
    spectral_lr = args.spectral_lr if args.spectral_lr is not None else args.lr
    if not 0.0 < spectral_lr <= 1.0:
        print("error: --spectral-lr must lie in (0, 1]", file=sys.stderr)
        return EXIT_USAGE
    paths = sorted(globmod.glob(args.inputs))
    if not paths:
        raise DataError(f"no matrices match {args.inputs!r}")
    graphs = [build_adjacency_graph(_read_pattern(p)) for p in paths]

    if args.init:
        try:
            model = cfp.load_checkpoint(args.init)
        except (OSError, ValueError) as exc:
            raise DataError(f"cannot load checkpoint {args.init}: {exc}") from exc
    else:
        model = cfp.CfpModel(hidden_dim=args.hidden_dim, activation=args.activation,
                             seed=args.seed)

    log_rows: list[tuple[str, int, float, float | None]] = []
    rng = np.random.default_rng(args.seed)
    spectral_epochs = args.spectral_epochs if args.spectral_epochs is not None else args.epochs
    try:
        if args.stage in ("spectral", "both"):
            history = cfp.train_spectral(model, graphs, epochs=spectral_epochs,
                                         lr=spectral_lr, rng=rng)
            log_rows.extend(("spectral", e, v, None) for e, v in enumerate(history))
        if args.stage in ("cfp", "both"):
            if "spectral" not in model.adam:
                print("warning: training the score stage on an untrained spectral stage; "
                      "run --stage spectral (or both) first for meaningful features",
                      file=sys.stderr)
            history2 = cfp.train_cfp(model, graphs, epochs=args.epochs, lr=args.lr,
                                     t_multiplier=args.t_multiplier, rng=rng,
                                     fir_every=args.fir_every)
            log_rows.extend(("cfp", e, v, f) for e, v, f in history2)
    except cfp.TrainingDivergedError as exc:
        cfp.save_checkpoint(model, args.out)
        print(f"error: {exc}; checkpoint saved to {args.out}", file=sys.stderr)
        return EXIT_DATA

    cfp.save_checkpoint(model, args.out)
    if args.log:
        with open(args.log, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["stage", "epoch", "loss", "fir"])
            for stage, epoch, loss, fir in log_rows:
                writer.writerow([stage, epoch, repr(float(loss)),
                                 "" if fir is None else repr(float(fir))])
    print(f"trained stage={args.stage} on {len(graphs)} matrices; checkpoint: {args.out}")
    return EXIT_OK


def _cmd_compare(args) -> int:
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    for m in methods:
        if m not in METHODS:
            print(f"error: unknown method {m!r} (choose from {', '.join(METHODS)})", file=sys.stderr)
            return EXIT_USAGE
    paths = sorted(globmod.glob(args.inputs))
    if not paths:
        raise DataError(f"no matrices match {args.inputs!r}")
    model = None
    if "cfp" in methods:
        if not args.model:
            print("error: --model is required when comparing 'cfp'", file=sys.stderr)
            return EXIT_USAGE
        model = cfp.load_checkpoint(args.model)

    records: list[EvaluationRecord] = []
    for path in paths:
        name = os.path.basename(path)
        try:
            pattern = _read_pattern(path)
            graph = build_adjacency_graph(pattern)
        except DataError as exc:
            for m in methods:
                records.append(EvaluationRecord(name, 0, 0, m, error=str(exc)))
            continue
        for m in methods:
            try:
                t0 = time.perf_counter()
                ordering = _compute_ordering(m, graph, args.seed, model)
                reorder_time = time.perf_counter() - t0
                records.append(_evaluate(pattern, ordering, name, m, args.numeric, reorder_time))
            except (DataError, NotPositiveDefiniteError, ValueError, ArithmeticError) as exc:
                records.append(EvaluationRecord(name, pattern.n, pattern.nnz_full(), m,
                                                error=str(exc)))

    mean_rows = []
    for m in methods:
        ok = [r for r in records if r.method == m and not r.error]
        if not ok:
            continue
        mean = EvaluationRecord("MEAN", 0, 0, m)
        mean.fir = float(np.mean([r.fir for r in ok]))
        mean.bandwidth = int(round(np.mean([r.bandwidth for r in ok])))
        mean.flops = int(round(np.mean([r.flops for r in ok])))
        if all(r.reorder_time is not None for r in ok):
            mean.reorder_time = float(np.mean([r.reorder_time for r in ok]))
        if args.numeric:
            mean.factor_time = float(np.mean([r.factor_time for r in ok]))
            mean.speedup = float(np.mean([r.speedup for r in ok]))
        mean_rows.append(mean)

    sink = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(sink)
        writer.writerow(CSV_HEADER)
        for rec in records + mean_rows:
            writer.writerow(rec.csv_row())
    finally:
        if args.out:
            sink.close()
    return EXIT_OK


def _verify_graph(kind: str, n: int, p: float, rng: np.random.Generator):
    if kind == "erdos":
        return build_adjacency_graph(erdos_pattern(n, p, rng))
    if kind == "grid":
        r = max(1, int(np.sqrt(n)))
        c = max(1, n // r)
        return build_adjacency_graph(grid_pattern(r, c))
    if kind == "path":
        return build_adjacency_graph(path_pattern(n))
    if kind == "star":
        return build_adjacency_graph(star_pattern(n))
    raise DataError(f"unknown graph model {kind!r}")


def _cmd_verify(args) -> int:
    if args.n_max > 64:
        print("error: --n-max is capped at 64 (the pair oracle is quadratic)", file=sys.stderr)
        return EXIT_USAGE
    if args.n_min < 1 or args.n_min > args.n_max:
        print("error: need 1 <= --n-min <= --n-max", file=sys.stderr)
        return EXIT_USAGE
    rng = np.random.default_rng(args.seed)
    for trial in range(args.trials):
        n = int(rng.integers(args.n_min, args.n_max + 1))
        graph = _verify_graph(args.graph_model, n, args.p, rng)
        ordering = Ordering(rng.permutation(graph.n).astype(np.int64))
        game = eliminate(graph, ordering).fill_edges
        paths = fill_set_via_paths(graph, ordering)
        if game != paths:
            only_game = sorted(game - paths)
            only_paths = sorted(paths - game)
            print(f"MISMATCH at trial {trial}: n={graph.n}")
            print("edges:", sorted(graph.edge_set()))
            print("elimination order:", ordering.elim_seq.tolist())
            print("only in elimination game:", only_game)
            print("only in path oracle:", only_paths)
            return EXIT_VERIFY
    print(f"PASS {args.trials}/{args.trials} trials: elimination game and fill-path "
          f"oracle agree (model={args.graph_model}, n in [{args.n_min}, {args.n_max}], "
          f"backend={backend_name})")
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cfporder", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("reorder", help="compute a fill-reducing permutation")
    p.add_argument("input", help="MatrixMarket file")
    p.add_argument("--method", choices=METHODS, required=True)
    p.add_argument("--out", required=True, help="permutation file to write")
    p.add_argument("--model", help="checkpoint (required for cfp)")
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--finetune-epochs", type=int, default=0,
                   help="optional per-matrix fine-tuning for cfp")
    p.add_argument("--finetune-lr", type=float, default=cfp.DEFAULT_LEARNING_RATE)
    p.set_defaults(func=_cmd_reorder)

    p = sub.add_parser("evaluate", help="score a permutation against a matrix")
    p.add_argument("input", help="MatrixMarket file")
    p.add_argument("permutation", help="permutation file")
    p.add_argument("--numeric", action="store_true",
                   help="also run the numeric factorization and report speedup")
    p.add_argument("--method-label", default="file", help="method column value")
    p.add_argument("--reorder-time", type=float, default=0.0,
                   help="reordering seconds to charge in the speedup formula")
    p.add_argument("--out", help="CSV file (default: stdout)")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("train", help="train the reordering model")
    p.add_argument("inputs", help="glob of MatrixMarket training files")
    p.add_argument("--out", required=True, help="checkpoint file to write")
    p.add_argument("--stage", choices=("spectral", "cfp", "both"), default="both")
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--lr", type=float, default=cfp.DEFAULT_LEARNING_RATE)
    p.add_argument("--spectral-epochs", type=int, default=None,
                   help="epochs for the spectral stage (default: --epochs)")
    p.add_argument("--spectral-lr", type=float, default=1e-2,
                   help="learning rate for the spectral stage")
    p.add_argument("--t-multiplier", type=int, default=cfp.DEFAULT_TRIPLETS_PER_VERTEX,
                   help="triplets sampled per vertex per epoch")
    p.add_argument("--fir-every", type=int, default=0,
                   help="measure training-set FIR every k epochs (0: never)")
    p.add_argument("--hidden-dim", type=int, default=cfp.DEFAULT_HIDDEN_DIM)
    p.add_argument("--activation", choices=("relu", "tanh", "identity"), default="relu")
    p.add_argument("--init", help="resume from this checkpoint")
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--log", help="per-epoch CSV log file")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("compare", help="run several methods over a set of matrices")
    p.add_argument("inputs", help="glob of MatrixMarket files")
    p.add_argument("--methods", default="natural,rcm,md,nd,fiedler")
    p.add_argument("--numeric", action="store_true")
    p.add_argument("--model", help="checkpoint for cfp")
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--out", help="CSV file (default: stdout)")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("verify", help="check the fill-path oracle against the elimination game")
    p.add_argument("--graph-model", choices=("erdos", "grid", "path", "star"), default="erdos")
    p.add_argument("--n-min", type=int, default=5)
    p.add_argument("--n-max", type=int, default=40)
    p.add_argument("--p", type=float, default=0.2, help="edge probability for erdos")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.set_defaults(func=_cmd_verify)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ParseError, NotPositiveDefiniteError, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
