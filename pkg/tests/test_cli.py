import json
import subprocess
import sys

import numpy as np
import pytest

from obstacle_ridge import cli
from obstacle_ridge.errors import FactorizationError
from obstacle_ridge.estimator import load_model


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


def _config(path):
    first = open(path, encoding="utf-8").readline()
    assert first.startswith("# config: ")
    return json.loads(first[len("# config: "):])


@pytest.fixture
def train_csv(tmp_path, rng):
    X = rng.uniform(size=(40, 3))
    y = np.sin(3 * X[:, 0])
    lines = ["x1,x2,x3,y"] + [",".join(repr(float(v)) for v in (*x, t)) for x, t in zip(X, y)]
    return _write(tmp_path / "train.csv", "\n".join(lines) + "\n")


def test_fit_scalar(tmp_path, capsys):
    data = _write(tmp_path / "one.csv", "x1,x2,x3,y\n0.5,0.5,0.5,2\n")
    out = str(tmp_path / "m.json")
    assert cli.main(["fit", "--data", data, "--gamma", "5", "--lambda", "1", "--out", out]) == 0
    m = load_model(out)
    assert m.c[0] == pytest.approx(1 / 3, rel=1e-15)
    assert m.config["gamma"] == 5.0 and "threads" not in m.config
    assert "gamma=5.0" in capsys.readouterr().out


@pytest.mark.parametrize("text,needle", [
    ("", "empty"),
    ("x1,x2,y\n", "no data rows"),
    ("a,b,y\n1,2,3\n", "header"),
    ("x1,x2\n1,2\n", "missing y"),
    ("x1,x2,y\n1,2,3\n4,oops,6\n", "line 3, column 2 (x2)"),
    ("x1,x2,y\n1,2,3\n4,5\n", "line 3: expected 3 fields"),
    ("x1,x2,y\n1,2,inf\n", "line 2, column 3 (y)"),
])
def test_fit_malformed_csv(tmp_path, capsys, text, needle):
    data = _write(tmp_path / "bad.csv", text)
    assert cli.main(["fit", "--data", data, "--out", str(tmp_path / "m.json")]) == 2
    assert needle in capsys.readouterr().err


def test_fit_missing_file_and_out(tmp_path, train_csv):
    assert cli.main(["fit", "--data", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "m.json")]) == 2
    assert cli.main(["fit", "--data", train_csv]) == 2
    assert cli.main(["fit", "--data", train_csv, "--mode", "erm", "--out", str(tmp_path / "m.json")]) == 2
    assert cli.main(["fit", "--data", train_csv, "--d", "4", "--out", str(tmp_path / "m.json")]) == 2


def test_fit_solver_failure_exit_3(tmp_path, train_csv, monkeypatch):
    def fail(*a, **k):
        raise FactorizationError("forced")

    monkeypatch.setattr(cli, "fit", fail)
    assert cli.main(["fit", "--data", train_csv, "--out", str(tmp_path / "m.json")]) == 3


def test_fit_rerun_byte_identical(tmp_path, train_csv):
    a, b = str(tmp_path / "a.json"), str(tmp_path / "b.json")
    assert cli.main(["fit", "--data", train_csv, "--out", a, "--threads", "1"]) == 0
    assert cli.main(["fit", "--data", train_csv, "--out", b, "--threads", "3"]) == 0
    assert open(a, "rb").read() == open(b, "rb").read()


def test_fit_erm(tmp_path, train_csv):
    out = str(tmp_path / "m.json")
    assert cli.main(["fit", "--data", train_csv, "--mode", "erm", "--erm-bound", "0.3", "--out", out]) == 0
    m = load_model(out)
    assert m.mode == "erm" and m.norm_sq == pytest.approx(0.09, rel=1e-5)


def test_predict_examples(tmp_path):
    data = _write(tmp_path / "one.csv", "x1,x2,x3,y\n0.5,0.5,0.5,2\n")
    model = str(tmp_path / "m.json")
    cli.main(["fit", "--data", data, "--gamma", "5", "--lambda", "1", "--out", model])
    q = _write(tmp_path / "q.csv", "x1,x2,x3\n0.5,0.5,0.5\n3,3,3\n")
    out = str(tmp_path / "p.csv")
    assert cli.main(["predict", "--model", model, "--data", q, "--out", out, "--hex"]) == 0
    rows = open(out).read().splitlines()
    assert rows[1] == "prediction,prediction_hex"
    vals = [float(r.split(",")[0]) for r in rows[2:]]
    assert vals[0] == pytest.approx(5 / 3, rel=1e-15)
    assert float.fromhex(rows[3].split(",")[1]) == vals[1]
    sm = str(tmp_path / "s.csv")
    assert cli.main(["predict", "--model", model, "--data", q, "--out", sm, "--smoothed"]) == 0
    svals = [float(r) for r in open(sm).read().splitlines()[2:]]
    assert svals[1] == pytest.approx(vals[1], rel=1e-8)
    assert _config(sm)["smoothed"] is True


def test_predict_zero_model_and_mismatch(tmp_path, capsys):
    data = _write(tmp_path / "z.csv", "x1,x2,x3,y\n0.1,0.2,0.3,0\n0.6,0.2,0.1,0\n")
    model = str(tmp_path / "m.json")
    cli.main(["fit", "--data", data, "--out", model])
    q = _write(tmp_path / "q.csv", "x1,x2,x3,y\n0.5,0.5,0.5,9\n0.1,0.1,0.1,9\n")
    assert cli.main(["predict", "--model", model, "--data", q]) == 0
    assert capsys.readouterr().out.splitlines()[-3:] == ["prediction", "0.0", "0.0"]
    q2 = _write(tmp_path / "q2.csv", "x1,x2\n0.5,0.5\n")
    assert cli.main(["predict", "--model", model, "--data", q2]) == 2
    assert cli.main(["predict", "--model", str(tmp_path / "none.json"), "--data", q]) == 2


def test_rate_study_band_logic(tmp_path):
    args = ["rate-study", "--n-grid", "64,128", "--seeds", "0,1", "--n-test", "1000"]
    assert cli.main(args + ["--band", "5", "6", "--out", str(tmp_path / "bad")]) == 1
    assert cli.main(args + ["--band", "-5", "5", "--out", str(tmp_path / "ok")]) == 0
    summary = json.loads((tmp_path / "ok.summary.json").read_text())
    assert summary["in_band"] is True and summary["config"]["n_grid"] == [64, 128]
    lines = (tmp_path / "ok.csv").read_text().splitlines()
    assert lines[1] == "n,seed,gamma,lambda,mse" and len(lines) == 6
    assert _config(tmp_path / "ok.csv")["target_seed"] == 12345


def test_rate_study_timing_column(tmp_path):
    args = ["rate-study", "--n-grid", "64,128", "--seeds", "0", "--n-test", "1000", "--timing",
            "--out", str(tmp_path / "t")]
    cli.main(args)
    assert (tmp_path / "t.csv").read_text().splitlines()[1].endswith(",wall_ms")


def test_erm_study_with_ridge_reference(tmp_path):
    out = tmp_path / "e"
    code = cli.main(["erm-study", "--n-grid", "64,128", "--seeds", "0,1", "--n-test", "1000", "--band", "-5", "5",
                     "--compare-ridge", "--min-shallower", "0", "--out", str(out)])
    assert code == 0
    ref = json.loads((tmp_path / "e.summary.json").read_text())["ridge_reference"]
    assert ref["seeds"] == 2 and len(ref["per_seed_slopes"]) == 2


def test_illposed(tmp_path):
    out = str(tmp_path / "ill.csv")
    assert cli.main(["illposed", "--d", "3", "--out", out]) == 0
    rows = [r.split(",") for r in open(out).read().splitlines() if not r.startswith("#")][1:]
    h = np.array([float(r[0]) for r in rows])
    e = np.array([float(r[3]) for r in rows])
    assert np.polyfit(np.log(h), np.log(e), 1)[0] == pytest.approx(1.0, abs=1e-6)
    assert cli.main(["illposed", "--widths", "10", "1"]) == 2


def test_threads_env_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.THREADS_ENV, "zero")
    assert cli.main(["illposed"]) == 2
    monkeypatch.setenv(cli.THREADS_ENV, "2")
    assert cli.main(["illposed", "--out", str(tmp_path / "x.csv")]) == 0


def test_check_reports_every_invariant(tmp_path):
    out = str(tmp_path / "report.txt")
    assert cli.main(["check", "--out", out]) == 0
    lines = open(out).read().splitlines()
    assert lines[-1].startswith("SUMMARY") and all(l.startswith("PASS") for l in lines[1:-1])
    names = {l.split()[1].rstrip(":") for l in lines[1:-1]}
    assert {"gram.diagonal_exact", "potential.harmonicity_rel_residual", "poincare.loglog_slope",
            "illposed.d3.energy_exponent_error"} <= names


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "obstacle_ridge", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "rate-study" in res.stdout
    res = subprocess.run([sys.executable, "-m", "obstacle_ridge", "fit"], capture_output=True, text=True)
    assert res.returncode == 2
