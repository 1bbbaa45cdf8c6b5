import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from certilab import __version__
from certilab.cli import main
from certilab.linalg import read_matrix_csv, write_matrix_csv


def _run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr().out
    return code, (json.loads(out) if out.strip() else None)


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert __version__ in capsys.readouterr().out


def test_usage_errors_exit_64(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["certify", "--signal", "x.csv", "--objective", "f1"])
    assert exc.value.code == 64
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 64
    assert main(["gen-matrix", "--kind", "gaussian", "--out", "a.csv"]) == 64


def test_certify_exit_codes(tmp_path, capsys):
    write_matrix_csv(tmp_path / "A.csv", np.array([[2.0, 1.0]]))
    write_matrix_csv(tmp_path / "x.csv", np.array([0.5, 0.0]))
    write_matrix_csv(tmp_path / "B.csv", np.array([[1.0, 1.0]]))
    write_matrix_csv(tmp_path / "y.csv", np.array([1.0, 0.0]))
    code, out = _run(capsys, "certify", "--matrix", tmp_path / "A.csv", "--signal", tmp_path / "x.csv",
                     "--objective", "f1")
    assert code == 0 and out["verdict"] == "unique" and out["m"] == 1
    code, out = _run(capsys, "certify", "--matrix", tmp_path / "B.csv", "--signal", tmp_path / "y.csv",
                     "--objective", "f1", "--method", "duality")
    assert code == 1 and out["verdict"] == "not_unique"
    code, out = _run(capsys, "certify", "--matrix", tmp_path / "A.csv", "--signal", tmp_path / "x.csv",
                     "--objective", "f1", "--eps", "0.6")
    assert code == 2 and out["verdict"] == "indeterminate"


def test_data_errors_exit_65(tmp_path, capsys):
    write_matrix_csv(tmp_path / "A.csv", np.ones((2, 3)))
    write_matrix_csv(tmp_path / "x.csv", np.ones(4))
    assert main(["certify", "--matrix", str(tmp_path / "A.csv"), "--signal", str(tmp_path / "x.csv"),
                 "--objective", "f1"]) == 65
    assert main(["certify", "--matrix", str(tmp_path / "nope.csv"), "--signal", str(tmp_path / "x.csv"),
                 "--objective", "f1"]) == 65
    write_matrix_csv(tmp_path / "neg.csv", np.array([1.0, -1.0, 0.0]))
    assert main(["certify", "--matrix", str(tmp_path / "A.csv"), "--signal", str(tmp_path / "neg.csv"),
                 "--objective", "f2"]) == 65
    assert main(["statdim", "--objective", "f4-1d", "--signal", str(tmp_path / "x.csv"),
                 "--closed-form"]) == 65


def test_generate_certify_recover_pipeline(tmp_path, capsys):
    x_path, a_path, b_path, r_path = (tmp_path / n for n in ("x.csv", "A.csv", "b.csv", "r.csv"))
    code, out = _run(capsys, "gen-signal", "--structure", "sparse", "--n", 40, "--rho", 0.1,
                     "--class", "nonnegative", "--seed", 3, "--out", x_path)
    assert code == 0
    x = read_matrix_csv(x_path)[:, 0]
    assert np.count_nonzero(x) == 4 and np.all(x >= 0)
    code, _ = _run(capsys, "gen-matrix", "--kind", "gaussian", "--n", 40, "--m", 30, "--seed", 1,
                   "--out", a_path)
    A = read_matrix_csv(a_path)
    assert code == 0 and A.shape == (30, 40)
    code, out = _run(capsys, "certify", "--matrix", a_path, "--signal", x_path, "--objective", "f2")
    assert code == 0
    write_matrix_csv(b_path, A @ x)
    code, out = _run(capsys, "recover", "--matrix", a_path, "--rhs", b_path, "--objective", "f2",
                     "--out", r_path)
    assert code == 0 and out["residual_inf"] < 1e-8
    np.testing.assert_allclose(read_matrix_csv(r_path)[:, 0], x, atol=1e-6)


def test_2d_signal_and_tomography(tmp_path, capsys):
    x_path, a_path = tmp_path / "img.csv", tmp_path / "A.csv"
    code, _ = _run(capsys, "gen-signal", "--structure", "gradient-sparse-2d", "--n", 8, "--rho", 0.3,
                   "--class", "binary", "--seed", 2, "--out", x_path)
    assert code == 0 and read_matrix_csv(x_path).shape == (8, 8)
    code, _ = _run(capsys, "gen-matrix", "--kind", "tomo-binary", "--N", 8, "--angles", 3,
                   "--mask", "rectangle", "--out", a_path)
    A = read_matrix_csv(a_path)
    assert code == 0 and A.shape[1] == 64 and set(np.unique(A)) <= {0.0, 1.0}
    code, out = _run(capsys, "certify", "--matrix", a_path, "--signal", x_path, "--objective", "f6-2d",
                     "--method", "specialized")
    assert code in (0, 1) and out["n"] == 64


def test_statdim_command(tmp_path, capsys):
    x = np.zeros(100)
    x[:10] = 1.0
    write_matrix_csv(tmp_path / "x.csv", x)
    code, out = _run(capsys, "statdim", "--objective", "f1", "--signal", tmp_path / "x.csv",
                     "--closed-form")
    assert code == 0 and abs(out["j_star"] - 33) <= 1 and out["method"] == "closed_form"
    code, out = _run(capsys, "statdim", "--objective", "f4-1d", "--signal", tmp_path / "x.csv",
                     "--samples", 300, "--seed", 1)
    assert code == 0 and out["method"] == "monte_carlo" and out["samples"] == 300


def test_phase_command(tmp_path, capsys):
    cfg = {"case": "f1", "value_class": "real", "n": 12, "m_grid": [3, 12], "rho_grid": [0.25],
           "trials": 2, "statdim": True}
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    code, out = _run(capsys, "phase", "--config", tmp_path / "c.json", "--out", tmp_path / "d.csv",
                     "--pgm", tmp_path / "d.pgm", "--overlay", tmp_path / "o.pgm", "--quiet")
    assert code == 0
    assert (tmp_path / "d.csv").read_text().startswith("rho,m,trials")
    assert (tmp_path / "d.pgm").read_text().startswith("P2")
    assert (tmp_path / "o.pgm").exists()
    cfg["bogus"] = 1
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    assert main(["phase", "--config", str(tmp_path / "c.json"), "--out", str(tmp_path / "e.csv"),
                 "--quiet"]) == 65


def test_selftest_quick(capsys):
    code, out = _run(capsys, "selftest", "--quick")
    assert code == 0 and out["ok"] is True
    assert out["kernel_max_error"] < 1e-8


@pytest.mark.skipif(shutil.which("certilab") is None, reason="console script not installed")
def test_console_script():
    res = subprocess.run(["certilab", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and __version__ in res.stdout
    res = subprocess.run([sys.executable, "-m", "certilab.cli", "bogus"], capture_output=True, text=True)
    assert res.returncode == 64
