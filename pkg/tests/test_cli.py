import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from flextucker.cli import main
from flextucker.driver import TuckerDecomposition
from flextucker.fileio import dten_bytes, load_decomposition, read_dten, save_decomposition, write_dten
from flextucker.harness import SAMPLE_COLUMNS, write_samples_csv
from flextucker.selector import TrainingSample, load_model
from flextucker.tensor import DenseTensor, random_tensor, synth_lowrank


@pytest.fixture
def lowrank_file(tmp_path):
    path = tmp_path / "x.dten"
    write_dten(path, synth_lowrank((12, 10, 8), (3, 4, 2), 0))
    return path


def test_decompose_reports_small_error(tmp_path, lowrank_file):
    rep = tmp_path / "rep.json"
    code = main(["decompose", "--input", str(lowrank_file), "--ranks", "3,4,2", "--strategy", "costmodel",
                 "--output", str(tmp_path / "x.tucker"), "--report", str(rep), "--with-error"])
    assert code == 0
    doc = json.loads(rep.read_text())
    assert doc["relative_error"] <= 1e-8
    assert doc["schema_version"] == 1
    assert [m["mode"] for m in doc["modes"]] == [0, 1, 2]
    T, meta = load_decomposition(tmp_path / "x.tucker")
    assert T.ranks == (3, 4, 2) and meta["strategy"] == "costmodel"


def test_decompose_manual_echo(tmp_path, lowrank_file):
    rep = tmp_path / "rep.json"
    assert main(["decompose", "--input", str(lowrank_file), "--ranks", "3,4,2", "--strategy", "manual:e,a,e",
                 "--output", str(tmp_path / "o"), "--report", str(rep)]) == 0
    assert [m["solver_used"] for m in json.loads(rep.read_text())["modes"]] == ["EIG", "ALS", "EIG"]


@pytest.mark.parametrize("ranks,strategy", [("3,4,2,1", "eig"), ("3,4", "eig"), ("30,4,2", "eig"),
                                            ("3,4,2", "manual:e,a"), ("3,4,2", "fastest")])
def test_decompose_usage_errors(tmp_path, lowrank_file, ranks, strategy, capsys):
    code = main(["decompose", "--input", str(lowrank_file), "--ranks", ranks, "--strategy", strategy,
                 "--output", str(tmp_path / "o")])
    assert code == 2
    assert capsys.readouterr().err


def test_decompose_missing_input(tmp_path):
    assert main(["decompose", "--input", str(tmp_path / "nope.dten"), "--ranks", "1",
                 "--output", str(tmp_path / "o")]) == 3


def test_decompose_adaptive_with_and_without_model(tmp_path, lowrank_file):
    rep = tmp_path / "rep.json"
    main(["decompose", "--input", str(lowrank_file), "--ranks", "3,4,2", "--strategy", "adaptive",
          "--output", str(tmp_path / "o"), "--report", str(rep)])
    doc = json.loads(rep.read_text())
    assert doc["strategy"] == "costmodel" and doc["notes"]
    from flextucker.selector import constant_model, save_model

    save_model(constant_model(1), tmp_path / "m.json")
    main(["decompose", "--input", str(lowrank_file), "--ranks", "3,4,2", "--strategy", "adaptive",
          "--model", str(tmp_path / "m.json"), "--output", str(tmp_path / "o2"), "--report", str(rep)])
    doc = json.loads(rep.read_text())
    assert doc["strategy"] == "adaptive"
    assert [m["solver_used"] for m in doc["modes"]] == ["ALS"] * 3


def _err_out(capsys, tensor, tucker):
    assert main(["error", "--input", str(tensor), "--decomposition", str(tucker)]) == 0
    return capsys.readouterr().out.strip()


def test_error_command(tmp_path, capsys):
    X = random_tensor((5, 6, 4), 0, "normal")
    write_dten(tmp_path / "x.dten", X)
    main(["decompose", "--input", str(tmp_path / "x.dten"), "--ranks", "5,6,4", "--strategy", "eig",
          "--output", str(tmp_path / "full")])
    assert float(_err_out(capsys, tmp_path / "x.dten", tmp_path / "full")) <= 1e-12

    zero = TuckerDecomposition(DenseTensor.full((1, 1, 1), 0.0), [np.ones((d, 1)) for d in X.dims], X.dims)
    save_decomposition(tmp_path / "zero", zero)
    out = _err_out(capsys, tmp_path / "x.dten", tmp_path / "zero")
    assert float(out) == 1.0 and out.startswith("1.000000")

    # X + eps * ||X|| * E with unit-norm E, decomposed exactly, measured against X
    eps = 3.25e-4
    E = random_tensor(X.dims, 9, "normal")
    Enorm = np.linalg.norm(E.data)
    Xp = DenseTensor(X.dims, X.data + eps * np.linalg.norm(X.data) * E.data / Enorm)
    write_dten(tmp_path / "xp.dten", Xp)
    main(["decompose", "--input", str(tmp_path / "xp.dten"), "--ranks", "5,6,4", "--strategy", "eig",
          "--output", str(tmp_path / "pert")])
    assert float(_err_out(capsys, tmp_path / "x.dten", tmp_path / "pert")) == pytest.approx(eps, abs=1e-9)


def test_error_shape_mismatch(tmp_path, lowrank_file):
    write_dten(tmp_path / "y.dten", random_tensor((3, 3, 3), 0))
    main(["decompose", "--input", str(lowrank_file), "--ranks", "3,4,2", "--output", str(tmp_path / "t")])
    assert main(["error", "--input", str(tmp_path / "y.dten"), "--decomposition", str(tmp_path / "t")]) == 2


def test_reconstruct_command(tmp_path, lowrank_file):
    main(["decompose", "--input", str(lowrank_file), "--ranks", "3,4,2", "--output", str(tmp_path / "t")])
    assert main(["reconstruct", "--decomposition", str(tmp_path / "t"), "--output", str(tmp_path / "r.dten")]) == 0
    X, R = read_dten(lowrank_file), read_dten(tmp_path / "r.dten")
    assert np.linalg.norm(X.data - R.data) <= 1e-8 * np.linalg.norm(X.data)


def test_info_command(tmp_path, capsys):
    write_dten(tmp_path / "ones.dten", DenseTensor.full((2, 2, 2), 1.0))
    assert main(["info", "--input", str(tmp_path / "ones.dten")]) == 0
    out = capsys.readouterr().out
    assert "order: 3" in out and "dims: 2x2x2" in out and "frobenius_norm: 2.828427" in out

    write_dten(tmp_path / "v.dten", np.arange(5.0))
    assert main(["info", "--input", str(tmp_path / "v.dten")]) == 0
    assert "order: 1" in capsys.readouterr().out

    buf = dten_bytes(DenseTensor.full((2, 2, 2), 1.0))
    (tmp_path / "cut.dten").write_bytes(buf[:-5])
    assert main(["info", "--input", str(tmp_path / "cut.dten")]) == 3
    err = capsys.readouterr().err
    assert str(len(buf) - 5) in err and str(len(buf)) in err


def test_synth_command(tmp_path):
    assert main(["synth", "--dims", "6,5,4", "--ranks", "2,2,2", "--seed", "3",
                 "--output", str(tmp_path / "s.dten")]) == 0
    assert read_dten(tmp_path / "s.dten").dims == (6, 5, 4)
    assert main(["synth", "--dims", "3,3", "--ranks", "4,1", "--output", str(tmp_path / "b.dten")]) == 2


def test_gendata_command(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["gendata", "--count", "50", "--dim-range", "10:40", "--seed", "1", "--repeats", "1",
                 "--out", str(out)]) == 0
    with open(out) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == SAMPLE_COLUMNS
    assert len(rows) - 1 >= 50


def test_gendata_bad_range(tmp_path):
    with pytest.raises(SystemExit) as info:
        main(["gendata", "--count", "5", "--dim-range", "40:10", "--out", str(tmp_path / "s.csv")])
    assert info.value.code == 2


def _separable_csv(path, n=10):
    # two clusters far apart in I; R and J fixed, so every varying feature separates them
    samples = []
    for i in range(n):
        als = i % 2 == 1
        I = 170 + i if als else 20 + i
        te, ta = (2.0, 1.0) if als else (1.0, 2.0)
        samples.append(TrainingSample.from_times(I, 10, 1000, te, ta, dims=(I, 10, 100), ranks=(10, 5, 5),
                                                 mode=0, seed=i))
    write_samples_csv(path, samples)


def test_train_command(tmp_path):
    _separable_csv(tmp_path / "s.csv")
    ev = tmp_path / "ev.json"
    assert main(["train", "--samples", str(tmp_path / "s.csv"), "--split", "0.7", "--max-depth-grid", "1:10",
                 "--cv", "3", "--seed", "0", "--out", str(tmp_path / "m.json"), "--eval-report", str(ev)]) == 0
    doc = json.loads(ev.read_text())
    assert doc["n_test"] == 3 and doc["n_train"] == 7
    assert doc["accuracy"] == 1.0
    load_model(tmp_path / "m.json")


def test_train_missing_and_degenerate(tmp_path):
    assert main(["train", "--samples", str(tmp_path / "none.csv"), "--out", str(tmp_path / "m.json")]) == 3
    samples = [TrainingSample.from_times(20 + i, 2, 100, 1.0, 2.0) for i in range(10)]
    write_samples_csv(tmp_path / "one.csv", samples)
    assert main(["train", "--samples", str(tmp_path / "one.csv"), "--out", str(tmp_path / "m.json")]) == 5
    assert load_model(tmp_path / "m.json").depth == 0


def _bench_cases_file(tmp_path):
    write_dten(tmp_path / "fx.dten", synth_lowrank((14, 12, 10), (3, 3, 3), 1))
    doc = {"cases": [{"name": "fx", "path": "fx.dten", "ranks": [3, 3, 3]}]}
    (tmp_path / "cases.json").write_text(json.dumps(doc))
    return tmp_path / "cases.json"


def test_bench_command(tmp_path):
    cases_file = _bench_cases_file(tmp_path)
    out, out_csv = tmp_path / "r.json", tmp_path / "r.csv"
    assert main(["bench", "--tensors", str(cases_file), "--strategies", "eig,als", "--repeats", "1",
                 "--out", str(out), "--csv", str(out_csv)]) == 0
    rows = json.loads(out.read_text())["rows"]
    assert len(rows) == 2
    assert abs(rows[0]["relative_error"] - rows[1]["relative_error"]) <= 0.01
    assert all(r["total_time"] > 0 for r in rows)
    assert len(out_csv.read_text().splitlines()) == 3


def test_bench_adaptive_fallback_and_empty(tmp_path):
    cases_file = _bench_cases_file(tmp_path)
    out = tmp_path / "r.json"
    assert main(["bench", "--tensors", str(cases_file), "--strategies", "eig,adaptive", "--repeats", "1",
                 "--out", str(out)]) == 0
    assert any("costmodel" in n for n in json.loads(out.read_text())["notes"])
    assert main(["bench", "--tensors", str(cases_file), "--strategies", "", "--out", str(out)]) == 2
    assert main(["bench", "--tensors", str(cases_file), "--strategies", " , ", "--out", str(out)]) == 2


def test_bench_all_failed(tmp_path):
    (tmp_path / "cases.json").write_text(json.dumps({"cases": [{"dims": [4, 4, 4], "ranks": [5, 1, 1]}]}))
    assert main(["bench", "--tensors", str(tmp_path / "cases.json"), "--strategies", "eig",
                 "--repeats", "1", "--out", str(tmp_path / "r.json")]) == 4


def test_module_entry_point(tmp_path):
    write_dten(tmp_path / "ones.dten", DenseTensor.full((2, 2, 2), 1.0))
    proc = subprocess.run([sys.executable, "-m", "flextucker", "info", "--input", str(tmp_path / "ones.dten")],
                          capture_output=True, text=True, env={"ATUCKER_THREADS": "1", "PATH": ""})
    assert proc.returncode == 0
    assert "dims: 2x2x2" in proc.stdout
