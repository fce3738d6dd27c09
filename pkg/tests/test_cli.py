import subprocess
import sys
from pathlib import Path

import pytest

from thermoelectric.cli import (
    CONTRACTION_HEADER,
    CONVERGENCE_HEADER,
    DIAGNOSTICS_HEADER,
    ESTIMATES_HEADER,
    RECONSTRUCT_HEADER,
    REGULARITY_HEADER,
    main,
    run,
)
from thermoelectric.config import parse_config
from thermoelectric.io import read_csv, read_raw

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

SMALL = """
[grid]
n = 8
[sigma]
kind = sigmoid
sigma1 = 1
sigma2 = 2
width = 0.5
[boundary]
mode = electric
u0 = 0
e = 0.3 0.1 0
[picard]
joule = pointwise
[output]
fields = false
"""


def header(path):
    return path.read_bytes().split(b"\r\n", 1)[0].decode().split(",")


def test_solve_constant_config(tmp_path):
    assert main(["solve", "--config", str(CONFIGS / "constant.cfg"), "--out", str(tmp_path)]) == 0
    assert header(tmp_path / "diagnostics.csv") == DIAGNOSTICS_HEADER
    assert header(tmp_path / "estimates.csv") == ESTIMATES_HEADER
    rows = read_csv(tmp_path / "diagnostics.csv")
    assert 1 <= len(rows) <= 2
    summary = {r["key"]: r["value"] for r in read_csv(tmp_path / "summary.csv")}
    assert summary["status"] == "converged"
    fields = read_raw(tmp_path / "fields.f64")
    assert fields["u"].shape == (9, 9, 9) and fields["J_x"].shape == (8, 9, 9)
    # uniform field e = (0.1, 0, 0) with sigma = 2 gives J = 0.2 exactly
    assert abs(fields["J_x"] - 0.2).max() < 1e-12
    assert (tmp_path / "fields.vtk").read_text().startswith("# vtk DataFile Version 3.0\n")
    assert not [p for p in tmp_path.iterdir() if p.name.startswith(".")]


def test_solve_is_byte_identical(tmp_path):
    cfg = CONFIGS / "sigmoid.cfg"
    for d in ("a", "b"):
        assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / d), "--seed", "3"]) == 0
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert "diagnostics.csv" in names and "fields.f64" in names
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name


def test_usage_and_config_errors(tmp_path, capsys):
    assert main(["solve", "--config", str(tmp_path / "missing.cfg")]) == 2
    bad = tmp_path / "bad.cfg"
    bad.write_text(SMALL.replace("sigma1 = 1", "sigma1 = 0"))
    assert main(["solve", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "[sigma].sigma1" in err and "line 6" in err
    assert not (tmp_path / "o").exists()
    good = tmp_path / "good.cfg"
    good.write_text(SMALL)
    assert main(["solve", "--config", str(good), "--seed", "-1"]) == 2
    assert main(["solve", "--config", str(good), "--threads", "0"]) == 2
    with pytest.raises(SystemExit):
        main(["solve"])
    with pytest.raises(SystemExit):
        main(["frobnicate", "--config", str(good)])


def test_nonconvergence_exit_one_with_artifacts(tmp_path):
    cfg = parse_config(SMALL.replace("joule = pointwise", "joule = pointwise\nmaxiter = 1"))
    assert run("solve", cfg, tmp_path) == 1
    assert len(read_csv(tmp_path / "diagnostics.csv")) == 1
    summary = {r["key"]: r["value"] for r in read_csv(tmp_path / "summary.csv")}
    assert summary["status"] != "converged"


def test_verify_subcommand(tmp_path):
    cfg = parse_config(SMALL + "[study]\nlevels = 4 8 16\ncases = smooth-nonlinear\n")
    assert run("verify", cfg, tmp_path) == 0
    assert header(tmp_path / "convergence.csv") == CONVERGENCE_HEADER
    rows = read_csv(tmp_path / "convergence.csv")
    assert [r["n"] for r in rows] == ["4", "8", "16"]
    assert rows[0]["order_u_l2"] == ""
    assert all(float(r["order_u_l2"]) >= 1.8 for r in rows[1:])


def test_contraction_subcommand(tmp_path):
    cfg = parse_config(SMALL + "[study]\nscales = 0.1 0.3 1\nperturbation = 0.1\n")
    assert run("contraction-study", cfg, tmp_path) == 0
    assert header(tmp_path / "contraction.csv") == CONTRACTION_HEADER
    f = [float(r["max_factor"]) for r in read_csv(tmp_path / "contraction.csv")]
    assert len(f) == 3 and f == sorted(f) and f[-1] < 1
    summary = {r["key"]: r["value"] for r in read_csv(tmp_path / "summary.csv")}
    assert summary["factor_monotone"] == "true"


def test_regularity_subcommand(tmp_path):
    cfg = parse_config(SMALL + "[study]\nlevels = 4 8 16\nalpha = 0.25\nmu = 4\n")
    assert run("regularity-study", cfg, tmp_path) == 0
    assert header(tmp_path / "regularity.csv") == REGULARITY_HEADER
    rows = read_csv(tmp_path / "regularity.csv")
    assert [r["n"] for r in rows] == ["4", "8", "16"]
    assert all(float(r["holder"]) > 0 and r["converged"] == "true" for r in rows)


def test_reconstruct_subcommand(tmp_path):
    assert main(["reconstruct", "--config", str(CONFIGS / "tangential.cfg"), "--out", str(tmp_path)]) == 0
    assert header(tmp_path / "reconstruct.csv") == RECONSTRUCT_HEADER
    row = read_csv(tmp_path / "reconstruct.csv")[0]
    assert row["normal_max"] == "0.0" and row["converged"] == "true"
    H = read_raw(tmp_path / "H.f64")
    assert H["H_x"].shape == (13, 12, 12)
    assert (tmp_path / "H.vtk").exists()


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "thermoelectric", "solve", "--config", str(CONFIGS / "constant.cfg"),
                           "--out", str(tmp_path)], capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "diagnostics.csv").exists()
