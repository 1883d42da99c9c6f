import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from crystalwalk import __version__
from crystalwalk.cli import parse_params, parse_window, run, UsageError
from crystalwalk.lattice_core import build_builtin, graph_to_json, load_graph

SIMPLE_SQ = "alpha=0.25,alpha_p=0.25,beta=0.25,beta_p=0.25"


def _json(capsys, argv, code=0):
    assert run(argv) == code
    return json.loads(capsys.readouterr().out)


def test_parse_params_rationals():
    assert parse_params("alpha=1/3, beta=0.5") == {"alpha": 1 / 3, "beta": 0.5}
    with pytest.raises(UsageError):
        parse_params("alpha")
    with pytest.raises(UsageError):
        parse_params("alpha=x")


def test_parse_window():
    assert parse_window("-1:2", 2) == [(-1, 2), (-1, 2)]
    assert parse_window("0:1,3:3", 2) == [(0, 1), (3, 3)]
    with pytest.raises(UsageError):
        parse_window("0:1,0:1,0:1", 2)


def test_analyze_square(capsys):
    rep = _json(capsys, ["analyze", "--lattice", "square", "--params", SIMPLE_SQ])
    assert rep["schema"] == "crystalwalk/1" and rep["version"] == __version__
    assert rep["wall_time_s"] >= 0 and rep["config"]["lattice"] == "square"
    assert rep["volume"] == pytest.approx(4.0)
    assert rep["period"] == {"K": 2, "K0": 1}
    assert rep["refinement"]["index"] == 2
    assert rep["refinement"]["hnf"] == [[1, 1], [0, 2]]


def test_analyze_report_round_trip(tmp_path, capsys):
    out = tmp_path / "r.json"
    assert run(["analyze", "--lattice", "hexagonal", "--params",
                "alpha=0.4,alpha_p=0.2,beta=0.2,beta_p=0.4,gamma=0.4,gamma_p=0.4",
                "--output", str(out)]) == 0
    first = json.loads(out.read_text())
    src = tmp_path / "g.json"
    src.write_text(json.dumps(first["graph"]))
    out2 = tmp_path / "r2.json"
    assert run(["analyze", "--input", str(src), "--output", str(out2)]) == 0
    second = json.loads(out2.read_text())
    for key in ("gram", "metric", "volume", "embedding", "measure", "asymptotic_direction"):
        np.testing.assert_allclose(np.asarray(second[key] if key != "measure" else
                                              list(second[key].values())),
                                   np.asarray(first[key] if key != "measure" else
                                              list(first[key].values())), rtol=1e-15)


def test_realize_csv(tmp_path):
    assert run(["realize", "--lattice", "square", "--window", "0:1", "--output",
                str(tmp_path)]) == 0
    rows = list(csv.DictReader(open(tmp_path / "points.csv")))
    assert list(rows[0]) == ["vertex", "cell", "x", "y"]
    coords = {(round(float(r["x"]), 12), round(float(r["y"]), 12)) for r in rows}
    r2 = round(2 ** 0.5, 12)
    assert {(0.0, 0.0), (r2, 0.0), (0.0, r2), (r2, r2)} <= coords
    edges = list(csv.reader(open(tmp_path / "edges.csv")))
    assert edges[0] == ["from_row", "to_row"] and len(edges) == 5


def test_heat_csv(capsys):
    assert run(["heat", "--lattice", "square", "--n", "2"]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert list(rows[0]) == ["vertex", "cell_1", "cell_2", "p"]
    total = sum(float(r["p"]) for r in rows)
    assert total == pytest.approx(1.0)
    origin = [r for r in rows if r["vertex"] == "x@[0,0]" and r["cell_1"] == "0"
              and r["cell_2"] == "0"]
    assert float(origin[0]["p"]) == pytest.approx(0.25)


def test_lclt_series(capsys):
    rep = _json(capsys, ["lclt", "--lattice", "square", "--n-list", "16,64", "--window=-2:2"])
    s = rep["series"]
    assert [r["n"] for r in s] == [16, 64]
    assert s[1]["sup_error"] < s[0]["sup_error"]
    assert abs(s[1]["U_n"] - 1) < 0.02


def test_a1_triangular_both(capsys):
    rep = _json(capsys, ["a1", "--lattice", "triangular", "--params",
                         "alpha=1/6,alpha_p=1/6,beta=1/6,beta_p=1/6,gamma=1/6,gamma_p=1/6",
                         "--mode", "both"])
    assert abs(rep["a1_analytic"] - rep["a1_numeric"]) <= 0.02
    assert "a1_printed_form" in rep and "linear_systems" in rep["residuals"]
    assert rep["coordinates"]["frame"] == "albanese-orthonormal"


def test_clt_deterministic(tmp_path, capsys):
    argv = ["clt", "--lattice", "hexagonal", "--n", "32", "--t", "0.5,1", "--paths", "500",
            "--seed", "3"]
    a = _json(capsys, argv)
    b = _json(capsys, argv + ["--samples", str(tmp_path / "s.csv")])
    assert a["report"] == b["report"]
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "t,path,x1,x2" and len(lines) == 1 + 2 * 500


def test_validate_exit_codes(tmp_path, capsys):
    ok = _json(capsys, ["validate", "--lattice", "hexagonal"])
    assert ok["valid"] is True
    broken = build_builtin("square").with_probabilities([0.5, 0.25, 0.25, 0.25])
    path = tmp_path / "broken.json"
    path.write_text(graph_to_json(broken))
    rep = _json(capsys, ["validate", "--input", str(path)], code=1)
    assert any("row sum" in v for v in rep["violations"])


def test_error_exit_codes(tmp_path, capsys):
    assert run(["analyze", "--bogus"]) == 64
    assert run([]) == 64
    assert run(["analyze"]) == 64
    assert run(["analyze", "--lattice", "square", "--params", "alpha=0.9"]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert run(["analyze", "--input", str(bad)]) == 1
    assert run(["analyze", "--input", str(tmp_path / "missing.json")]) == 1
    flat = {"dim": 2, "vertices": ["x"], "edges": [
        {"id": "a", "from": "x", "to": "x", "translation": [1, 0], "p": 0.5, "inverse": "b"},
        {"id": "b", "from": "x", "to": "x", "translation": [-1, 0], "p": 0.5, "inverse": "a"}]}
    path = tmp_path / "flat.json"
    path.write_text(json.dumps(flat))
    assert run(["analyze", "--input", str(path), "--no-refine"]) == 2
    capsys.readouterr()


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "crystalwalk", "--version"],
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == __version__
