import numpy as np
import pytest

from sdetransform.cli import main


def read_csv(path):
    lines = path.read_text(encoding="utf-8").splitlines()
    header = [line for line in lines if line.startswith("#")]
    body = [line for line in lines if not line.startswith("#")]
    return header, body[0].split(","), [row.split(",") for row in body[1:]]


def test_missing_example_is_config_error(capsys):
    assert main(["convergence"]) == 2
    assert "usage" in capsys.readouterr().err


def test_unknown_key_rejected():
    assert main(["check", "--example", "unit-circle", "--set", "nonsense.key=1"]) == 2


def test_unknown_example_rejected():
    assert main(["check", "--example", "torus"]) == 2


def test_bad_config_file(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("example.name = unit-circle\nthis line is broken\n")
    assert main(["check", "--config", str(cfg)]) == 2


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# unit circle\nexample.name = unit-circle\ntransform.c = 10\n")
    assert main(["check", "--config", str(cfg)]) == 4
    assert main(["check", "--config", str(cfg), "--set", "transform.c=0.5"]) == 0


def test_check_results(capsys):
    assert main(["check", "--example", "unit-circle"]) == 0
    assert main(["check", "--example", "unit-circle", "--set", "sde.sigma_scale=0"]) == 4
    assert "FAIL  non-parallelity" in capsys.readouterr().out
    assert main(["check", "--example", "unit-circle", "--set", "transform.c=10"]) == 4


def test_convergence_csv(tmp_path):
    out = tmp_path / "conv.csv"
    code = main(["convergence", "--example", "unit-circle", "--levels", "4", "--paths", "16",
                 "--seed", "7", "--methods", "gm,em", "--out", str(out), "--set", "convergence.band=-10,10"])
    assert code == 0
    header, cols, rows = read_csv(out)
    assert cols == ["method", "level", "log2_dt", "raw_l2_diff", "err_k", "mc_stderr"]
    assert len(rows) == 2 * 3
    assert any("example.name=unit-circle" in h for h in header)
    assert float(rows[0][4]) == pytest.approx(np.sqrt(0.5))


def test_convergence_band_failure(tmp_path):
    code = main(["convergence", "--example", "unit-circle", "--levels", "4", "--paths", "16",
                 "--methods", "gm", "--out", str(tmp_path / "c.csv"), "--set", "convergence.band=5,6"])
    assert code == 4


def test_convergence_needs_two_levels():
    assert main(["convergence", "--example", "unit-circle", "--levels", "1"]) == 2


def test_simulate_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["simulate", "--example", "unit-circle", "--levels", "6", "--paths", "1", "--seed", "7"]
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    _, cols, rows = read_csv(a)
    assert cols == ["path", "t", "x_1", "x_2"]
    assert len(rows) == 65


def test_simulate_no_jump_gm_equals_em(tmp_path):
    outs = {}
    for m in ("gm", "em"):
        outs[m] = tmp_path / f"{m}.csv"
        assert main(["simulate", "--example", "no-jump", "--levels", "7", "--paths", "3", "--seed", "2",
                     "--methods", m, "--out", str(outs[m])]) == 0
    assert read_csv(outs["gm"])[2] == read_csv(outs["em"])[2]


def test_simulate_dividend_in_simplex(tmp_path):
    out = tmp_path / "d.csv"
    assert main(["simulate", "--example", "dividend", "--levels", "8", "--paths", "10", "--out", str(out)]) == 0
    _, cols, rows = read_csv(out)
    pi = np.array([[float(v) for v in r[3:]] for r in rows])
    assert len(cols) == 7
    assert pi.min() >= -0.05 and pi.max() <= 1.05


def test_simulate_single_method():
    assert main(["simulate", "--example", "unit-circle", "--methods", "gm,em"]) == 2


def test_1d_points_override(capsys):
    assert main(["check", "--example", "1d-jump", "--set", "surface.points=0,1"]) in (0, 4)
    assert "admissibility" in capsys.readouterr().out
