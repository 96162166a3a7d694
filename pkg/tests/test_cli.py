import csv
import io
import os

import numpy as np
import pytest

from cfporder import cli
from cfporder.generators import grid_pattern, relabel_pattern
from cfporder.graph import Ordering
from cfporder.mmio import parse_permutation, write_matrix_market

from test_mmio import DEMO4


def run_cli(*argv):
    return cli.main(list(argv))


@pytest.fixture()
def demo4_file(tmp_path):
    path = tmp_path / "demo4.mtx"
    path.write_text(DEMO4)
    return os.fspath(path)


@pytest.fixture()
def grid_files(tmp_path):
    paths = []
    for s in range(3):
        p = relabel_pattern(grid_pattern(6, 6), np.random.default_rng(s).permutation(36))
        f = tmp_path / f"grid{s}.mtx"
        with open(f, "w") as fh:
            write_matrix_market(p, fh)
        paths.append(os.fspath(f))
    return paths


# --------------------------------------------------------------------------
# reorder


def test_reorder_md_zero_fill_downstream(demo4_file, tmp_path, capsys):
    out = os.fspath(tmp_path / "perm.txt")
    assert run_cli("reorder", demo4_file, "--method", "md", "--out", out) == 0
    printed = capsys.readouterr().out
    assert "n=4" in printed and "m=3" in printed and "wall_time" in printed
    with open(out) as fh:
        ordering = parse_permutation(fh)
    from cfporder.graph import build_adjacency_graph
    from cfporder.mmio import parse_matrix_market
    from cfporder.symbolic import eliminate

    g = build_adjacency_graph(parse_matrix_market(DEMO4))
    assert eliminate(g, ordering).fill_edges == frozenset()


def test_reorder_natural_is_identity(demo4_file, tmp_path):
    out = os.fspath(tmp_path / "perm.txt")
    assert run_cli("reorder", demo4_file, "--method", "natural", "--out", out) == 0
    with open(out) as fh:
        assert parse_permutation(fh).elim_seq.tolist() == [0, 1, 2, 3]


def test_reorder_usage_and_data_errors(demo4_file, tmp_path):
    out = os.fspath(tmp_path / "x.txt")
    assert run_cli("reorder", demo4_file, "--method", "nope", "--out", out) == 1
    assert run_cli("reorder", "missing.mtx", "--method", "md", "--out", out) == 2
    assert run_cli("reorder", demo4_file, "--method", "cfp", "--out", out) == 1  # no --model
    bad = tmp_path / "bad.mtx"
    bad.write_text("definitely not matrix market\n")
    assert run_cli("reorder", os.fspath(bad), "--method", "md", "--out", out) == 2


# --------------------------------------------------------------------------
# evaluate


def _evaluate_rows(capsys, *argv):
    assert run_cli(*argv) == 0
    reader = csv.reader(io.StringIO(capsys.readouterr().out))
    header = next(reader)
    assert header == cli.CSV_HEADER
    return list(reader)


def test_evaluate_demo4_natural_fir(demo4_file, tmp_path, capsys):
    perm = tmp_path / "nat.txt"
    perm.write_text("0\n1\n2\n3\n")
    rows = _evaluate_rows(capsys, "evaluate", demo4_file, os.fspath(perm))
    rec = cli.EvaluationRecord.from_csv_row(rows[0])
    assert rec.fir == 0.4
    assert rec.bandwidth == 2
    assert rec.n == 4 and rec.nnz_full == 10


def test_evaluate_demo4_zero_fill_ordering(demo4_file, tmp_path, capsys):
    perm = tmp_path / "good.txt"
    perm.write_text("2\n3\n0\n1\n")
    rows = _evaluate_rows(capsys, "evaluate", demo4_file, os.fspath(perm))
    assert cli.EvaluationRecord.from_csv_row(rows[0]).fir == 0.0


def test_evaluate_size_mismatch(demo4_file, tmp_path):
    perm = tmp_path / "short.txt"
    perm.write_text("0\n1\n")
    assert run_cli("evaluate", demo4_file, os.fspath(perm)) == 2


def test_evaluate_numeric_identity_speedup(tmp_path, capsys):
    # diagonal matrix: reordering is a no-op, speedup is timing noise around 1
    n = 400
    path = tmp_path / "eye.mtx"
    lines = ["%%MatrixMarket matrix coordinate real symmetric", f"{n} {n} {n}"]
    lines += [f"{i} {i} 2.0" for i in range(1, n + 1)]
    path.write_text("\n".join(lines) + "\n")
    perm = tmp_path / "id.txt"
    perm.write_text("\n".join(str(v) for v in range(n)) + "\n")
    rows = _evaluate_rows(capsys, "evaluate", os.fspath(path), os.fspath(perm), "--numeric")
    rec = cli.EvaluationRecord.from_csv_row(rows[0])
    assert rec.speedup is not None and np.isfinite(rec.speedup)
    assert 0.05 < rec.speedup < 20.0
    assert rec.factor_time > 0


# --------------------------------------------------------------------------
# train


def test_train_rejects_bad_lr(grid_files, tmp_path):
    out = os.fspath(tmp_path / "m.ckpt")
    glob_arg = os.path.join(os.path.dirname(grid_files[0]), "grid*.mtx")
    assert run_cli("train", glob_arg, "--out", out, "--lr", "2.0") == 1
    assert run_cli("train", glob_arg, "--out", out, "--lr", "0.0") == 1


def test_train_rejects_empty_glob(tmp_path):
    assert run_cli("train", os.fspath(tmp_path / "none*.mtx"), "--out", os.fspath(tmp_path / "m.ckpt")) == 2


def test_train_smoke_and_checkpoint_round_trip(grid_files, tmp_path, capsys):
    out = os.fspath(tmp_path / "model.ckpt")
    log = os.fspath(tmp_path / "log.csv")
    glob_arg = os.path.join(os.path.dirname(grid_files[0]), "grid*.mtx")
    code = run_cli(
        "train", glob_arg, "--out", out, "--log", log, "--stage", "both",
        "--epochs", "25", "--spectral-epochs", "60", "--seed", "11",
    )
    assert code == 0
    capsys.readouterr()

    with open(log) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["stage", "epoch", "loss", "fir"]
    stages = {r[0] for r in rows[1:]}
    assert stages == {"spectral", "cfp"}

    # the checkpoint drives reorder without error
    perm = os.fspath(tmp_path / "p.txt")
    assert run_cli("reorder", grid_files[0], "--method", "cfp", "--model", out,
                   "--out", perm, "--seed", "5") == 0
    with open(perm) as fh:
        assert sorted(parse_permutation(fh).elim_seq.tolist()) == list(range(36))

    # resuming continues the optimizer step counter monotonically
    from cfporder.model import load_checkpoint

    steps_before = load_checkpoint(out).adam["encoder"].step_count
    out2 = os.fspath(tmp_path / "model2.ckpt")
    code = run_cli(
        "train", glob_arg, "--out", out2, "--stage", "cfp", "--epochs", "5",
        "--init", out, "--seed", "12",
    )
    assert code == 0
    assert load_checkpoint(out2).adam["encoder"].step_count > steps_before


# --------------------------------------------------------------------------
# compare


def test_compare_shape_and_round_trip(grid_files, tmp_path):
    out = os.fspath(tmp_path / "cmp.csv")
    glob_arg = os.path.join(os.path.dirname(grid_files[0]), "grid*.mtx")
    assert run_cli("compare", glob_arg, "--methods", "natural,md", "--out", out) == 0
    with open(out) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == cli.CSV_HEADER
    data = rows[1:]
    assert len(data) == 3 * 2 + 2  # one per (matrix, method) plus one mean per method
    mean_rows = [r for r in data if r[0] == "MEAN"]
    assert {r[3] for r in mean_rows} == {"natural", "md"}
    records = [cli.EvaluationRecord.from_csv_row(r) for r in data]
    assert all(r.error == "" for r in records)
    # round trip: records serialize back to the same rows
    assert [r.csv_row() for r in records] == data


def test_compare_fiedler_beats_natural_on_grids(grid_files, tmp_path):
    out = os.fspath(tmp_path / "cmp.csv")
    glob_arg = os.path.join(os.path.dirname(grid_files[0]), "grid*.mtx")
    assert run_cli("compare", glob_arg, "--methods", "natural,fiedler", "--out", out) == 0
    with open(out) as fh:
        rows = [cli.EvaluationRecord.from_csv_row(r) for r in list(csv.reader(fh))[1:]]
    means = {r.method: r.fir for r in rows if r.matrix == "MEAN"}
    assert means["fiedler"] < means["natural"]


def test_compare_unknown_method_is_usage_error(grid_files):
    glob_arg = os.path.join(os.path.dirname(grid_files[0]), "grid*.mtx")
    assert run_cli("compare", glob_arg, "--methods", "natural,bogus") == 1


def test_compare_records_per_matrix_errors(tmp_path):
    good = tmp_path / "a_good.mtx"
    good.write_text(DEMO4)
    bad = tmp_path / "b_bad.mtx"
    bad.write_text("garbage\n")
    out = os.fspath(tmp_path / "cmp.csv")
    glob_arg = os.fspath(tmp_path / "*_*.mtx")
    assert run_cli("compare", glob_arg, "--methods", "natural", "--out", out) == 0
    with open(out) as fh:
        rows = [cli.EvaluationRecord.from_csv_row(r) for r in list(csv.reader(fh))[1:]]
    by_matrix = {r.matrix: r for r in rows if r.matrix != "MEAN"}
    assert by_matrix["a_good.mtx"].error == ""
    assert by_matrix["b_bad.mtx"].error != ""


# --------------------------------------------------------------------------
# verify


def test_verify_passes_on_erdos(capsys):
    assert run_cli("verify", "--trials", "60", "--seed", "3") == 0
    assert "PASS 60/60" in capsys.readouterr().out


def test_verify_all_graph_models(capsys):
    for model in ("grid", "path", "star"):
        assert run_cli("verify", "--graph-model", model, "--trials", "15", "--seed", "4") == 0
    capsys.readouterr()


def test_verify_trivial_n1(capsys):
    assert run_cli("verify", "--n-min", "1", "--n-max", "1", "--trials", "5") == 0
    capsys.readouterr()


def test_verify_enforces_size_cap():
    assert run_cli("verify", "--n-max", "100") == 1


def test_verify_reports_mismatch(monkeypatch, capsys):
    # force a disagreement to exercise the counterexample path
    import cfporder.cli as climod

    real = climod.fill_set_via_paths
    monkeypatch.setattr(climod, "fill_set_via_paths", lambda g, o: real(g, o) | {(0, 1)})
    code = run_cli("verify", "--trials", "3", "--seed", "5", "--n-min", "30", "--n-max", "40")
    out = capsys.readouterr().out
    assert code == 3
    assert "MISMATCH" in out and "only in path oracle" in out


# --------------------------------------------------------------------------
# determinism


def test_cli_runs_are_deterministic(grid_files, tmp_path, capsys):
    a = os.fspath(tmp_path / "a.txt")
    b = os.fspath(tmp_path / "b.txt")
    for out in (a, b):
        assert run_cli("reorder", grid_files[0], "--method", "nd", "--out", out, "--seed", "9") == 0
    capsys.readouterr()
    assert open(a, "rb").read() == open(b, "rb").read()

    ca = os.fspath(tmp_path / "a.csv")
    cb = os.fspath(tmp_path / "b.csv")
    glob_arg = os.path.join(os.path.dirname(grid_files[0]), "grid*.mtx")
    for out in (ca, cb):
        assert run_cli("compare", glob_arg, "--methods", "natural,rcm,md", "--out", out, "--seed", "9") == 0

    def non_timing(path):
        with open(path) as fh:
            rows = list(csv.reader(fh))
        keep = [i for i, name in enumerate(cli.CSV_HEADER) if not name.endswith("_time")]
        return [[r[i] for i in keep] for r in rows]

    assert non_timing(ca) == non_timing(cb)


def test_env_var_seed(monkeypatch):
    monkeypatch.setenv("CFPORDER_SEED", "123")
    parser = cli.build_parser()
    args = parser.parse_args(["verify", "--trials", "1"])
    assert args.seed == 123
