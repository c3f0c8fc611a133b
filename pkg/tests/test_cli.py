import json
import subprocess
import sys

import pytest

from mpsprep.cli import EXIT_OK, EXIT_USAGE, main
from mpsprep.costs import CostParams, mps_total_cost
from mpsprep.formats import load_mps
from mpsprep.symmetry import isometry_residual


@pytest.fixture
def state_file(tmp_path):
    path = tmp_path / "state.json"
    assert main(["gen", "--sites", "4", "--chi", "8", "--charge", "4,0", "--seed", "7", "-o", str(path)]) == EXIT_OK
    return path


def run_json(capsys, argv):
    assert main(argv) == EXIT_OK
    return json.loads(capsys.readouterr().out)


def test_gen_then_verify(state_file, capsys):
    code = main(["verify", str(state_file), "--seeds", "5"])
    out = capsys.readouterr().out
    assert code == EXIT_OK
    assert "result                   PASS" in out


def test_gen_writes_canonical(state_file):
    mps = load_mps(state_file)
    assert all(isometry_residual(t) < 1e-10 for t in mps.tensors)


def test_cost_json_matches_library(state_file, capsys):
    doc = run_json(capsys, ["cost", str(state_file), "--format", "json", "--bitsize", "12"])
    rep = mps_total_cost(load_mps(state_file), "sparse", CostParams(b=12))
    assert doc["toffolis"] == rep.toffolis
    assert doc["site_totals"] == rep.site_totals
    assert sum(doc["terms"].values()) == rep.toffolis
    assert set(doc["terms"]) == {"C_V", "C_P (W)", "C_P (Q)", "C_F"}


def test_cost_table(state_file, capsys):
    assert main(["cost", str(state_file), "--method", "dense"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "method            dense" in out
    assert "per site" in out


def test_compare(state_file, capsys):
    doc = run_json(capsys, ["compare", str(state_file), "--format", "json"])
    methods = [r["method"] for r in doc["rows"]]
    assert methods == ["dense", "dense_real", "sparse"]
    rows = {r["method"]: r for r in doc["rows"]}
    assert rows["sparse"]["improvement"] == 1.0
    assert doc["dense_over_dense_real"] == pytest.approx(rows["dense"]["toffolis"] / rows["dense_real"]["toffolis"], abs=1e-6)


def test_compare_complex_has_no_real_row(tmp_path, capsys):
    path = tmp_path / "c.json"
    main(["gen", "--sites", "3", "--chi", "4", "--charge", "3,1", "--scalar", "complex", "-o", str(path)])
    doc = run_json(capsys, ["compare", str(path), "--format", "json"])
    assert [r["method"] for r in doc["rows"]] == ["dense", "sparse"]
    assert doc["dense_over_dense_real"] is None


def test_synth_deterministic_across_threads(state_file, tmp_path, monkeypatch):
    outs = []
    for threads in ("1", "4"):
        monkeypatch.setenv("MPSPREP_THREADS", threads)
        path = tmp_path / f"plan{threads}.json"
        assert main(["synth", str(state_file), "-o", str(path)]) == EXIT_OK
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]
    doc = json.loads(outs[0])
    assert len(doc["sites"]) == 4


def test_repeat_runs_byte_identical(state_file, tmp_path):
    paths = [tmp_path / f"cost{i}.json" for i in range(2)]
    for p in paths:
        assert main(["cost", str(state_file), "--format", "json", "-o", str(p)]) == EXIT_OK
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_gen_deterministic(tmp_path):
    paths = [tmp_path / f"g{i}.json" for i in range(2)]
    for p in paths:
        main(["gen", "--sites", "5", "--chi", "8", "--charge", "5,1", "--seed", "3", "-o", str(p)])
    assert paths[0].read_bytes() == paths[1].read_bytes()


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["frobnicate"],
        ["gen", "--chi", "zero"],
        ["gen", "--charge", "a,b"],
        ["cost", "x.json", "--method", "magic"],
    ],
)
def test_usage_errors(argv, capsys):
    assert main(argv) == EXIT_USAGE
    assert "usage error" in capsys.readouterr().err


def test_parse_error(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"version": 1,\n "n": }')
    assert main(["cost", str(bad)]) == EXIT_USAGE
    assert "line 2" in capsys.readouterr().err


def test_infeasible_charge(capsys):
    assert main(["gen", "--sites", "2", "--charge", "9,0"]) == EXIT_USAGE
    assert capsys.readouterr().err


def test_bad_thread_env(state_file, monkeypatch, capsys):
    monkeypatch.setenv("MPSPREP_THREADS", "many")
    assert main(["cost", str(state_file)]) == EXIT_USAGE
    assert "MPSPREP_THREADS" in capsys.readouterr().err


def test_module_entry_point(state_file):
    proc = subprocess.run(
        [sys.executable, "-m", "mpsprep", "compare", str(state_file)], capture_output=True, text=True, check=False
    )
    assert proc.returncode == 0
    assert "dense / dense_real toffoli ratio" in proc.stdout
