import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from rasched.benchmark import CSV_COLUMNS, derive_seed, summarize
from rasched.cli import main, z_score
from rasched.instance import Instance, load_instance, save_instance


@pytest.fixture
def batch(tmp_path):
    out = tmp_path / "inst"
    assert main(["generate", "--n", "5", "--regime", "low", "high", "--count", "2",
                 "--seed", "7", "--out", str(out)]) == 0
    return out


def read_csv(path):
    return list(csv.DictReader(io.StringIO(path.read_text())))


# -- generate -----------------------------------------------------------------------------

def test_generate_writes_instances_and_manifest(batch):
    manifest = json.loads((batch / "manifest.json").read_text())
    assert manifest["seed"] == 7 and len(manifest["instances"]) == 4
    for i, entry in enumerate(manifest["instances"]):
        assert (batch / entry["path"]).exists()
        assert entry["seed"] == derive_seed(7, 0, i)
        inst = load_instance(batch / entry["path"])
        lo, hi = (0.15, 0.5) if entry["regime"] == "low" else (0.5, 1.5)
        assert np.all((inst.service_scv[1:] >= lo) & (inst.service_scv[1:] <= hi))
    assert len(list(batch.glob("*.json"))) == 5


def test_generate_same_seed_same_bytes(batch, tmp_path):
    again = tmp_path / "again"
    main(["generate", "--n", "5", "--regime", "low", "high", "--count", "2", "--seed", "7",
          "--out", str(again)])
    for f in batch.iterdir():
        assert (again / f.name).read_bytes() == f.read_bytes()


def test_generate_needs_out(capsys):
    assert main(["generate", "--n", "3"]) == 2
    assert "error" in capsys.readouterr().err


# -- solve / evaluate ----------------------------------------------------------------------

@pytest.mark.parametrize("alg", ["lns", "tsp", "mtsp", "msvf", "enum"])
def test_solve_then_check(batch, tmp_path, alg):
    inst_path = batch / "n5-high-w1-000.json"
    sol = tmp_path / f"{alg}.json"
    assert main(["solve", str(inst_path), "--algorithm", alg, "--iters", "50", "--out", str(sol)]) == 0
    data = json.loads(sol.read_text())
    assert sorted(data["tour"]) == [1, 2, 3, 4, 5]
    assert data["objective_kind"] == "exact-optimized"
    assert main(["evaluate", str(inst_path), "--solution", str(sol), "--check",
                 "--out", str(tmp_path / "ev.json")]) == 0
    if alg == "tsp":
        o = data["orientations"]
        assert o["chosen"] <= o["reversed"]


def test_enum_not_worse_than_heuristics(batch, tmp_path):
    inst_path = batch / "n5-low-w1-001.json"
    values = {}
    for alg in ("enum", "lns", "tsp", "mtsp", "msvf"):
        out = tmp_path / f"{alg}.json"
        main(["solve", str(inst_path), "--algorithm", alg, "--iters", "100", "--out", str(out)])
        values[alg] = json.loads(out.read_text())["objective"]
    assert all(values["enum"] <= v + 1e-9 for v in values.values())


def test_check_detects_tampering(batch, tmp_path, capsys):
    inst_path = batch / "n5-low-w1-000.json"
    sol = tmp_path / "s.json"
    main(["solve", str(inst_path), "--algorithm", "tsp", "--out", str(sol)])
    data = json.loads(sol.read_text())
    data["objective"] *= 1.001
    sol.write_text(json.dumps(data))
    assert main(["evaluate", str(inst_path), "--solution", str(sol), "--check"]) == 1
    assert "mismatch" in capsys.readouterr().err


def test_evaluate_inline_tour(batch, capsys):
    assert main(["evaluate", str(batch / "n5-low-w1-000.json"), "--tour", "1,2,3,4,5",
                 "--schedule", "30,30,30,30,30"]) == 0
    data = json.loads(capsys.readouterr().out)
    b = data["breakdown"]
    assert data["objective"] == pytest.approx(b["travel"] + b["idle"] + b["wait"], rel=1e-12)
    weight_idle = load_instance(batch / "n5-low-w1-000.json").weight_idle
    assert b["idle"] == pytest.approx(weight_idle * sum(b["per_client_idle"]), rel=1e-12)


@pytest.mark.parametrize("tour,schedule", [("1,2,2,4,5", "1,1,1,1,1"), ("1,2,3,4,5", "1,-1,1,1,1"),
                                           ("1,2,3", "1,1")])
def test_invalid_inputs_exit_2(batch, capsys, tour, schedule):
    assert main(["evaluate", str(batch / "n5-low-w1-000.json"), "--tour", tour,
                 "--schedule", schedule]) == 2
    assert "error" in capsys.readouterr().err


# -- simulate / verify -------------------------------------------------------------------

def test_simulate_reproducible(batch, tmp_path):
    args = ["simulate", str(batch / "n5-high-w1-001.json"), "--tour", "5,4,3,2,1",
            "--schedule", "40,40,40,40,40", "--reps", "2000", "--seed", "3"]
    main(args + ["--out", str(tmp_path / "a.json")])
    main(args + ["--out", str(tmp_path / "b.json")])
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_verify_passes(batch, tmp_path, capsys):
    sol = tmp_path / "s.json"
    main(["solve", str(batch / "n5-high-w1-000.json"), "--algorithm", "msvf", "--out", str(sol)])
    rc = main(["verify", str(batch / "n5-high-w1-000.json"), "--solution", str(sol),
               "--reps", "200000", "--seed", "1"])
    out = capsys.readouterr().out
    assert rc == 0 and "PASS" in out
    assert out.count("idle[") == 5 and out.count("wait[") == 5


def test_verify_deterministic_instance(tmp_path, capsys):
    inst = Instance(np.zeros((3, 2)), [[0, 10, 20], [10, 0, 5], [20, 5, 0]], np.zeros((3, 3)),
                    [0, 30, 40], [0, 0, 0], 1.0, 2.0, [0, 3, 4], explicit_travel=True)
    path = tmp_path / "det.json"
    save_instance(inst, path)
    assert main(["verify", str(path), "--tour", "1,2", "--schedule", "10,35", "--reps", "100"]) == 0
    assert "max |z| = 0.00" in capsys.readouterr().out


def test_z_score():
    assert z_score(1.0, 1.0, 0.0) == 0.0
    assert z_score(1.1, 1.0, 0.0) == float("inf")
    assert z_score(1.2, 1.0, 0.1) == pytest.approx(2.0)


# -- benchmark ---------------------------------------------------------------------------

def test_benchmark_single_algorithm_gap_zero(batch, tmp_path):
    out = tmp_path / "b.csv"
    assert main(["benchmark", str(batch / "manifest.json"), "--algorithms", "tsp",
                 "--out", str(out)]) == 0
    rows = read_csv(out)
    assert len(rows) == 4
    assert all(float(r["gap_pct"]) == 0.0 for r in rows)
    assert tuple(rows[0].keys()) == CSV_COLUMNS


def test_benchmark_enum_rows_have_zero_gap(batch, tmp_path):
    out, summary = tmp_path / "b.csv", tmp_path / "s.csv"
    assert main(["benchmark", str(batch / "manifest.json"), "--algorithms", "lns", "tsp", "enum",
                 "--iters", "50", "--out", str(out), "--summary", str(summary)]) == 0
    rows = read_csv(out)
    assert len(rows) == 12
    for r in rows:
        assert r["status"] == "ok"
        assert float(r["gap_pct"]) >= 0.0
        if r["algorithm"] == "enum":
            assert float(r["gap_pct"]) == 0.0
        if r["algorithm"] == "lns":
            assert r["wall_ms"] == "" and r["budget"] == "50"
    groups = summarize(out.read_text())
    assert {(g["regime"], g["algorithm"]) for g in groups} == {
        (reg, alg) for reg in ("low", "high") for alg in ("lns", "tsp", "enum")}
    assert summary.read_text().splitlines()[0].startswith("n,omega_t,regime,algorithm")


def test_benchmark_is_byte_identical(batch, tmp_path):
    args = ["benchmark", str(batch / "manifest.json"), "--iters", "60", "--seed", "3"]
    main(args + ["--out", str(tmp_path / "a.csv")])
    main(args + ["--out", str(tmp_path / "b.csv")])
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_benchmark_records_failures(batch, tmp_path):
    manifest = json.loads((batch / "manifest.json").read_text())
    manifest["instances"][0]["path"] = "missing.json"
    (batch / "manifest.json").write_text(json.dumps(manifest))
    out = tmp_path / "b.csv"
    assert main(["benchmark", str(batch / "manifest.json"), "--algorithms", "msvf",
                 "--out", str(out)]) == 0
    rows = read_csv(out)
    assert rows[0]["status"].startswith("error") and rows[0]["objective"] == ""
    assert all(r["status"] == "ok" for r in rows[1:])


def test_budget_flags_are_exclusive(batch):
    with pytest.raises(SystemExit):
        main(["solve", str(batch / "n5-low-w1-000.json"), "--iters", "5", "--time-limit", "1"])


def test_module_entry_point(batch):
    proc = subprocess.run([sys.executable, "-m", "rasched", "evaluate",
                           str(batch / "n5-low-w1-000.json"), "--tour", "1,2,3,4,5",
                           "--schedule", "30,30,30,30,30"], capture_output=True, text=True)
    assert proc.returncode == 0 and "objective" in proc.stdout
