import csv
import json
import shutil
import subprocess

import pytest

from pxfem.cli import main


def write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(cfg if isinstance(cfg, str) else json.dumps(cfg))
    return str(path)


def run(tmp_path, command, cfg, *extra, out="out"):
    return main([command, "--config", write(tmp_path, cfg), "--out", str(tmp_path / out), *extra])


B1 = {"exponent": {"kind": "constant", "value": 2.0}, "manufactured": "sinsin", "mesh": {"n0": 4, "levels": 1}}
B3 = {"exponent": {"kind": "sinusoidal", "base": 2.0, "amplitude": 0.5, "frequency": 1.0},
      "kappa": 1e-4, "manufactured": "sinsin", "mesh": {"n0": 4, "levels": 3}}


def test_solve_b1(tmp_path):
    assert run(tmp_path, "solve", B1) == 0
    stats = json.loads((tmp_path / "out" / "stats.json").read_text())
    assert stats["iterations"] == 1 and stats["converged"]
    rows = list(csv.reader(open(tmp_path / "out" / "solution.csv")))
    assert rows[0] == ["x", "y", "u0"] and len(rows) == 82
    assert (tmp_path / "out" / "mesh.pxmesh").read_text().startswith("pxmesh 1")


def test_solve_unreachable_tolerance(tmp_path, capsys):
    cfg = dict(B3, solver={"tol": 0.0, "max_iter": 5})
    assert run(tmp_path, "solve", cfg) == 2
    assert "final residual" in capsys.readouterr().err
    assert json.loads((tmp_path / "out" / "stats.json").read_text())["converged"] is False


@pytest.mark.parametrize("bad", [
    "{not json",
    "[1, 2]",
    json.dumps({"bogus": 1}),
    json.dumps({"kappa": 2.0}),
    json.dumps({"exponent": {"kind": "constant", "value": 0.9}}),
    json.dumps({"exponent": {"kind": "nope"}}),
    json.dumps({"solver": {"tol": -1}}),
    json.dumps({"rhs": "sinsin", "manufactured": "sinsin"}),
    json.dumps({"domain": "l-shape", "mesh": {"n0": 3}}),
    json.dumps({"probe": {"names": ["unknown"]}}),
])
def test_config_errors_exit_1(tmp_path, bad, capsys):
    assert run(tmp_path, "solve", bad) == 1
    assert "error" in capsys.readouterr().err


def test_missing_config_and_bad_arguments(tmp_path):
    assert main(["solve", "--config", str(tmp_path / "none.json"), "--out", str(tmp_path)]) == 1
    with pytest.raises(SystemExit) as info:
        main(["frobnicate", "--config", "x", "--out", "y"])
    assert info.value.code == 1
    assert run(tmp_path, "solve", B1, "--threads", "0") == 1


def test_malformed_mesh_input(tmp_path):
    mesh = tmp_path / "bad.pxmesh"
    mesh.write_text("pxmesh 1\n4 2\n0 0 1\n")
    cfg = dict(B1, mesh={"input": str(mesh)})
    assert run(tmp_path, "mesh", cfg) == 1


def test_study_b3_and_assertions(tmp_path):
    cfg = dict(B3, study={"assert_eoc": 0.9, "plot": True})
    assert run(tmp_path, "study", cfg) == 0
    rows = list(csv.DictReader(open(tmp_path / "out" / "report.csv")))
    assert len(rows) == 4 and float(rows[-1]["eoc"]) >= 0.9
    assert (tmp_path / "out" / "report.svg").exists()
    assert json.loads((tmp_path / "out" / "report.json").read_text())["metadata"]["levels"] == 3
    cfg = dict(B3, study={"assert_eoc": 1.5})
    assert run(tmp_path, "study", cfg, out="out2") == 3


def test_study_single_eoc_row(tmp_path):
    cfg = dict(B1, mesh={"n0": 4, "levels": 1})
    assert run(tmp_path, "study", cfg) == 0
    rows = list(csv.DictReader(open(tmp_path / "out" / "report.csv")))
    assert [r["eoc"] != "" for r in rows] == [False, True]


def test_study_solver_failure(tmp_path):
    cfg = dict(B3, solver={"tol": 0.0, "max_iter": 3})
    assert run(tmp_path, "study", cfg) == 2
    assert (tmp_path / "out" / "report.csv").exists()


def test_study_needs_manufactured(tmp_path):
    assert run(tmp_path, "study", {"rhs": "constant"}, ) == 1


def test_probe_hammer_p2_exact(tmp_path):
    cfg = {"exponent": {"kind": "constant", "value": 2.0}, "probe": {"names": ["hammer"], "draws": 500}}
    assert run(tmp_path, "probe", cfg) == 0
    rows = list(csv.DictReader(open(tmp_path / "out" / "probes.csv")))
    r = {row["probe"]: float(row["constant"]) for row in rows}
    for i in (1, 2, 3):
        assert r[f"hammer_r{i}:min"] == pytest.approx(r[f"hammer_r{i}:max"], rel=1e-12)
    assert r["hammer_r1:max"] == pytest.approx(1.0, rel=1e-12)
    assert r["hammer_r3:max"] == pytest.approx(1.0, rel=1e-12)


def test_probe_key_estimate_constant_p(tmp_path):
    cfg = {"exponent": {"kind": "constant", "value": 2.5},
           "probe": {"names": ["key_estimate"], "sweep_draws": 4, "resolution": 16}}
    assert run(tmp_path, "probe", cfg) == 0
    vals = [float(r["constant"]) for r in csv.DictReader(open(tmp_path / "out" / "probes.csv"))]
    assert len(vals) == 6 and max(vals) <= 1 + 1e-6


def test_probe_deterministic(tmp_path):
    cfg = {"exponent": {"kind": "sinusoidal", "base": 2.0, "amplitude": 0.5},
           "probe": {"names": ["hammer", "shift_ch", "key_estimate", "poincare"], "draws": 300,
                     "sweep_draws": 3, "resolution": 8}}
    assert run(tmp_path, "probe", cfg, "--seed", "5", out="a") == 0
    assert run(tmp_path, "probe", cfg, "--seed", "5", out="b") == 0
    assert (tmp_path / "a" / "probes.csv").read_bytes() == (tmp_path / "b" / "probes.csv").read_bytes()
    assert run(tmp_path, "probe", cfg, "--seed", "6", out="c") == 0
    assert (tmp_path / "a" / "probes.csv").read_bytes() != (tmp_path / "c" / "probes.csv").read_bytes()


def test_probe_all_names(tmp_path):
    from pxfem.config import PROBE_NAMES

    cfg = {"exponent": {"kind": "sinusoidal", "base": 2.0, "amplitude": 0.5}, "kappa": 1e-3,
           "probe": {"names": list(PROBE_NAMES), "draws": 200, "sweep_draws": 2, "resolution": 8}}
    assert run(tmp_path, "probe", cfg) == 0
    rows = list(csv.DictReader(open(tmp_path / "out" / "probes.csv")))
    assert {r["probe"].split(":")[0] for r in rows} >= {"hammer_r1", "young_min_gap", "shift_ch",
                                                         "key_estimate", "poincare_shift", "interp_stability"}


def test_mesh_command(tmp_path):
    assert run(tmp_path, "mesh", {"domain": "l-shape", "mesh": {"n0": 2, "levels": 2}}) == 0
    info = json.loads((tmp_path / "out" / "mesh.json").read_text())
    assert info["cells"] == 6 * 16 and info["euler"] == 1


@pytest.mark.skipif(shutil.which("pxfem") is None, reason="console script not installed")
def test_console_script(tmp_path):
    res = subprocess.run(["pxfem", "mesh", "--config", write(tmp_path, {}), "--out", str(tmp_path / "o")],
                         capture_output=True, text=True)
    assert res.returncode == 0 and '"cells": 32' in res.stdout
