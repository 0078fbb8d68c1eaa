import json

import pytest

from lwsw.cli import EXIT_CONFIG, EXIT_ERROR, EXIT_OK, EXIT_UNCONVERGED, main, run
from lwsw.config import config_from_dict
from lwsw.energy import CouplingParams, constraint, energy
from lwsw.minimizer import el_residual, lagrange_multiplier
from lwsw.persist import (
    find_results,
    load_result,
    read_scan_csv,
    result_stem,
    validate_directory,
)

PARAMS = {"alpha": [-1.0, -0.5], "beta": [-1.0, -0.5]}
SOLVE = {"command": "solve", "params": {**PARAMS, "lambda": 4.0}, "solve": {"tol_residual": 1e-10}}


def write_config(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


@pytest.fixture(scope="module")
def solved(tmp_path_factory):
    out = tmp_path_factory.mktemp("solve")
    cfg = config_from_dict({**SOLVE, "output_dir": str(out)})
    assert run(cfg) == EXIT_OK
    return out


def test_solve_artifacts(solved):
    names = sorted(p.name for p in solved.iterdir())
    stem = "N2_d1_lam4_seed0"
    assert names == sorted(["config.json", "run.json", f"{stem}.json", f"{stem}_u.bin", f"{stem}_v.bin"])
    run_doc = json.loads((solved / "run.json").read_text())
    assert run_doc["seed"] == 0 and run_doc["status"] == 0
    assert len(run_doc["input_hash"]) == 64
    # the stored config alone reruns the job
    cfg = json.loads((solved / "config.json").read_text())
    assert cfg["params"]["lambda"] == 4.0 and cfg["output_dir"] == str(solved)


def test_round_trip_reproduces_scalars(solved):
    doc, p, c = load_result(solved / "N2_d1_lam4_seed0.json")
    assert energy(p, c) == pytest.approx(doc["energy"], rel=1e-12)
    assert constraint(p, c) == pytest.approx(doc["constraint"], rel=1e-12)
    mu = lagrange_multiplier(p, c)
    assert mu == pytest.approx(doc["mu"], rel=1e-12)
    assert el_residual(p, mu, c) == pytest.approx(doc["residuals"], rel=1e-12, abs=1e-15)


def test_rerun_is_byte_identical(solved, tmp_path):
    cfg = config_from_dict({**json.loads((solved / "config.json").read_text()), "output_dir": str(tmp_path)})
    assert run(cfg) == EXIT_OK
    for name in ("N2_d1_lam4_seed0.json", "N2_d1_lam4_seed0_u.bin", "N2_d1_lam4_seed0_v.bin"):
        assert (tmp_path / name).read_bytes() == (solved / name).read_bytes()
    a = json.loads((solved / "run.json").read_text())
    b = json.loads((tmp_path / "run.json").read_text())
    assert a["input_hash"] == b["input_hash"]


def test_validate_detects_tampering(solved, tmp_path):
    assert main(["validate", str(solved)]) == EXIT_OK
    for f in solved.iterdir():
        (tmp_path / f.name).write_bytes(f.read_bytes())
    path = tmp_path / "N2_d1_lam4_seed0.json"
    doc = json.loads(path.read_text())
    doc["mu"] *= 1 + 1e-8
    path.write_text(json.dumps(doc))
    report = validate_directory(tmp_path)
    assert not report["ok"]
    assert "mu" in report["reports"][0]["mismatches"]
    assert main(["validate", str(tmp_path), "--output-dir", str(tmp_path / "v")]) == EXIT_UNCONVERGED
    assert json.loads((tmp_path / "v" / "validation.json").read_text())["ok"] is False


def test_seed_override_and_output_root(tmp_path, monkeypatch):
    monkeypatch.setenv("LWSW_OUTPUT_ROOT", str(tmp_path / "root"))
    cfg = write_config(tmp_path / "solve.json", SOLVE)
    assert main(["solve", "--config", cfg, "--seed", "5"]) == EXIT_OK
    (out,) = (tmp_path / "root").iterdir()
    assert out.name.startswith("solve-")
    assert (out / "N2_d1_lam4_seed5.json").exists()
    assert json.loads((out / "run.json").read_text())["seed"] == 5


def test_scan_csv_matches_json(tmp_path):
    cfg = write_config(tmp_path / "scan.json", {
        "command": "scan", "params": PARAMS, "solve": {"tol_residual": 1e-10},
        "scan": {"lambdas": [1, 2, 4], "n_seeds": 1, "subadditivity": [[4, 2]], "family": [2, 4]},
    })
    out = tmp_path / "out"
    assert main(["scan", "--config", cfg, "--output-dir", str(out)]) == EXIT_OK
    csv_rows = read_scan_csv(out / "scan.csv")
    doc = json.loads((out / "scan.json").read_text())
    assert len(csv_rows) == 3 == len(doc["rows"])
    for a, b in zip(csv_rows, doc["rows"]):
        assert a == {k: b[k] for k in a}
    report = doc["report"]
    assert report["monotone_and_scaling"]["passed"]
    assert report["subadditivity"]["passed"]
    assert report["family"]["speeds_increasing"]
    assert len(find_results(out)) == 3
    assert validate_directory(out)["ok"]


def test_evolve_from_result(solved, tmp_path):
    cfg = write_config(tmp_path / "ev.json", {"command": "evolve", "evolve": {"T": 0.1, "dt": 1e-3}})
    out = tmp_path / "ev"
    assert main(["evolve", "--config", cfg, "--from", str(solved), "--output-dir", str(out)]) == EXIT_OK
    doc = json.loads((out / "evolution.json").read_text())
    assert doc["shape_err"] < 1e-3
    assert max(doc["mass_drift"]) < 1e-10
    assert (out / "snapshots" / "manifest.json").exists()
    assert validate_directory(out)["ok"]


def test_config_error_exit_and_report(tmp_path):
    bad = json.loads(json.dumps(SOLVE))
    bad["params"]["lambda"] = -1
    cfg = write_config(tmp_path / "bad.json", bad)
    out = tmp_path / "out"
    assert main(["solve", "--config", cfg, "--output-dir", str(out)]) == EXIT_CONFIG
    err = json.loads((out / "error.json").read_text())
    assert err["field"] == "params.lambda" and err["error_type"] == "ConfigError"
    cfg = write_config(tmp_path / "mismatch.json", SOLVE)
    assert main(["scan", "--config", cfg, "--output-dir", str(out)]) == EXIT_CONFIG
    cfg = write_config(tmp_path / "nosrc.json", {"command": "evolve"})
    assert main(["evolve", "--config", cfg, "--output-dir", str(out)]) == EXIT_CONFIG


def test_runtime_error_exit_and_report(tmp_path, solved):
    # two results under one directory make the evolve source ambiguous
    src = tmp_path / "two"
    for sub in ("a", "b"):
        (src / sub).mkdir(parents=True)
        for f in solved.glob("N2_*"):
            (src / sub / f.name).write_bytes(f.read_bytes())
    cfg = config_from_dict({"command": "evolve", "evolve": {"source": str(src)}, "output_dir": str(tmp_path / "o")})
    assert run(cfg) == EXIT_ERROR
    err = json.loads((tmp_path / "o" / "error.json").read_text())
    assert err["error_type"] == "ValueError" and "matching results" in err["message"]


def test_unconverged_solve_exit_status(tmp_path):
    cfg = config_from_dict({**SOLVE, "solve": {"max_iters": 2}, "output_dir": str(tmp_path)})
    assert run(cfg) == EXIT_UNCONVERGED
    doc = json.loads((tmp_path / "N2_d1_lam4_seed0.json").read_text())
    assert doc["converged"] is False and doc["stop_reason"] == "max_iters"


def test_result_stem():
    assert result_stem(CouplingParams([-1.0], [-1.0], 2.0, 0.5), 3) == "N1_d2_lam0.5_seed3"


def test_validate_rejects_empty_directory(tmp_path):
    with pytest.raises(ValueError):
        validate_directory(tmp_path)
    assert main(["validate", str(tmp_path)]) == EXIT_ERROR
