"""
Test cases for the seqopt command line
"""

import json

import pytest

from cli import main
from oracles import brute_force_value
from services.model_service import load_model
from services.risk_service import load_weights

from conftest import BERNOULLI_DOC


def _write(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


def test_design_single_stage(run_config, tmp_path, capsys):
    out = tmp_path / "design_n1"
    assert main(["design", "--config", str(run_config), "--out", str(out), "--mode", "truncated", "--N", "1"]) == 0
    summary = capsys.readouterr().out
    assert "stops at stage 1" in summary
    assert (out / "design.json").exists()
    assert (out / "summary.txt").read_text() == summary
    manifest = json.loads((out / "manifest.json").read_text())
    assert f"manifest: {manifest['hash']}\n" in summary


def test_design_value_matches_brute_force(run_config, tmp_path):
    out = tmp_path / "design"
    assert main(["design", "--config", str(run_config), "--out", str(out)]) == 0
    doc = json.loads((out / "design.json").read_text())
    model = load_model(BERNOULLI_DOC)
    weights = load_weights({"lambda": [[0, 100], [100, 0]]})
    assert doc["schema"] == 1
    assert doc["value"] == pytest.approx(brute_force_value(model, weights, 3), abs=1e-10)
    manifest = json.loads((out / "manifest.json").read_text())
    assert doc["manifest_hash"] == manifest["hash"]


def test_zero_weights_give_trivial_design(tmp_path, capsys):
    config = _write(tmp_path / "zero.json", {
        "model": BERNOULLI_DOC,
        "weights": {"lambda": [[0, 0], [0, 0]]},
        "solver": {"mode": "truncated", "N": 4},
    })
    assert main(["design", "--config", config]) == 0
    summary = capsys.readouterr().out
    assert "trivial test" in summary
    assert "value: 1\n" in summary


def test_design_csv_export(run_config, tmp_path):
    out = tmp_path / "csv"
    assert main(["design", "--config", str(run_config), "--out", str(out), "--csv"]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    lines = (out / "value_tables.csv").read_text().splitlines()
    assert lines[0] == f"# manifest {manifest['hash']}"
    assert lines[1] == "stage,state,l,R,V,f_asn,action,boundary_tie,accept"
    assert (out / "trace.csv").exists()


def test_evaluate_round_trip(run_config, tmp_path):
    """Design artifact written then re-read gives the same characteristics"""
    out = tmp_path / "design"
    assert main(["design", "--config", str(run_config), "--out", str(out)]) == 0
    design = json.loads((out / "design.json").read_text())

    ev = tmp_path / "eval"
    assert main(["evaluate", "--config", str(run_config), "--design", str(out / "design.json"),
                 "--out", str(ev)]) == 0
    report = json.loads((ev / "evaluation.json").read_text())
    assert report["operating_characteristics"] == design["operating_characteristics"]


def test_evaluate_stop_after_one(run_config, tmp_path):
    out = tmp_path / "design"
    main(["design", "--config", str(run_config), "--out", str(out), "--mode", "truncated", "--N", "1"])
    ev = tmp_path / "eval"
    assert main(["evaluate", "--config", str(run_config), "--design", str(out / "design.json"),
                 "--out", str(ev)]) == 0
    report = json.loads((ev / "evaluation.json").read_text())
    assert report["operating_characteristics"]["asn"] == pytest.approx({"H1": 1.0, "H2": 1.0, "mixture": 1.0})


def test_simulate_is_byte_identical(run_config, tmp_path):
    out = tmp_path / "design"
    main(["design", "--config", str(run_config), "--out", str(out)])
    design = str(out / "design.json")

    first, second = tmp_path / "sim1", tmp_path / "sim2"
    args = ["simulate", "--config", str(run_config), "--design", design, "--reps", "3000", "--seed", "7"]
    assert main(args + ["--out", str(first)]) == 0
    assert main(args + ["--out", str(second), "--threads", "3"]) == 0
    assert (first / "simulation.json").read_bytes() == (second / "simulation.json").read_bytes()
    report = json.loads((first / "simulation.json").read_text())
    assert report["report"]["parameter"] == "H1"
    assert report["report"]["replications"] == 3000


def test_refuses_to_overwrite(run_config, tmp_path, capsys):
    out = tmp_path / "design"
    assert main(["design", "--config", str(run_config), "--out", str(out)]) == 0
    assert main(["design", "--config", str(run_config), "--out", str(out)]) == 2
    assert "--force" in capsys.readouterr().err
    assert main(["design", "--config", str(run_config), "--out", str(out), "--force"]) == 0


def test_invalid_model_exit_code(tmp_path):
    config = _write(tmp_path / "bad.json", {
        "model": {"alphabet": 2, "hypotheses": [[0.7, 0.2], [0.3, 0.7]], "asn": {"pmf": [0.5, 0.5]}},
        "weights": {"lambda": [[0, 1], [1, 0]]},
    })
    assert main(["design", "--config", config]) == 2
    assert main(["design", "--config", str(tmp_path / "missing.json")]) == 2


def test_state_cap_exit_code(tmp_path):
    config = _write(tmp_path / "cap.json", {
        "model": BERNOULLI_DOC,
        "weights": {"lambda": [[0, 100], [100, 0]]},
        "solver": {"mode": "truncated", "N": 50, "state_cap": 100},
    })
    assert main(["design", "--config", config]) == 3


def test_no_convergence_exit_code(tmp_path):
    config = _write(tmp_path / "slow.json", {
        "model": BERNOULLI_DOC,
        "weights": {"lambda": [[0, 100], [100, 0]]},
        "solver": {"mode": "limit", "tolerance": 1e-15, "n_start": 2, "n_step": 1, "n_max": 4},
    })
    assert main(["design", "--config", config]) == 4


def test_calibrate_meets_targets(tmp_path):
    config = _write(tmp_path / "calib.json", {
        "model": BERNOULLI_DOC,
        "solver": {"mode": "truncated", "N": 40},
        "targets": {"kind": "problem1", "alpha": [[0, 0.05], [0.05, 0]]},
    })
    out = tmp_path / "calib"
    assert main(["calibrate", "--config", config, "--out", str(out), "--csv"]) == 0
    report = json.loads((out / "calibration.json").read_text())
    alpha = report["result"]["achieved"]["alpha"]
    assert alpha[0][1] <= 0.051 and alpha[1][0] <= 0.051
    assert report["result"]["fixed_sample_benchmark"]["n"] == 15
    assert (out / "calibration_trace.csv").exists()

    ev = tmp_path / "eval"
    assert main(["evaluate", "--config", config, "--design", str(out / "design.json"), "--out", str(ev)]) == 0
    evaluation = json.loads((ev / "evaluation.json").read_text())
    assert evaluation["operating_characteristics"]["alpha"] == alpha


def test_stop_region_text_merges_continuation(run_config, tmp_path, capsys):
    """Continue states with different provisional decisions form one run"""
    assert main(["design", "--config", str(run_config)]) == 0
    summary = capsys.readouterr().out
    assert "stage 1: #1 in 0..1: continue\n" in summary


def test_evaluate_rejects_tie_index_out_of_range(run_config, tmp_path):
    out = tmp_path / "design"
    assert main(["design", "--config", str(run_config), "--out", str(out)]) == 0
    design = json.loads((out / "design.json").read_text())
    design["plan"]["stages"][1]["states"][0]["ties"] = [3]
    broken = _write(tmp_path / "broken.json", design)
    assert main(["evaluate", "--config", str(run_config), "--design", broken]) == 2


def _calibration_config(tmp_path):
    return _write(tmp_path / "calib.json", {
        "model": BERNOULLI_DOC,
        "solver": {"mode": "truncated", "N": 20},
        "targets": {"kind": "problem1", "alpha": [[0, 0.1], [0.1, 0]]},
    })


def _run_all(run_config, calibration, root):
    """design, evaluate and calibrate into one directory each; returns those directories"""
    design, evaluation, calibrated = root / "design", root / "eval", root / "calib"
    assert main(["design", "--config", str(run_config), "--out", str(design), "--csv"]) == 0
    assert main(["evaluate", "--config", str(run_config), "--design", str(design / "design.json"),
                 "--out", str(evaluation), "--csv"]) == 0
    assert main(["calibrate", "--config", calibration, "--out", str(calibrated), "--csv"]) == 0
    return [design, evaluation, calibrated]


def test_every_command_is_byte_identical(run_config, tmp_path):
    calibration = _calibration_config(tmp_path)
    first = _run_all(run_config, calibration, tmp_path / "first")
    second = _run_all(run_config, calibration, tmp_path / "second")
    for one, two in zip(first, second):
        names = sorted(p.name for p in one.iterdir() if p.name != "manifest.json")
        assert names == sorted(p.name for p in two.iterdir() if p.name != "manifest.json")
        assert len(names) >= 2
        for name in names:
            assert (one / name).read_bytes() == (two / name).read_bytes(), name


def test_artifacts_embed_manifest_hash(run_config, tmp_path):
    for out in _run_all(run_config, _calibration_config(tmp_path), tmp_path):
        digest = json.loads((out / "manifest.json").read_text())["hash"]
        for path in out.iterdir():
            if path.name != "manifest.json":
                assert digest in path.read_text(), path.name
