import json

import pytest

from cvmaser.cli import (
    EXIT_CLOSURE,
    EXIT_FAILED,
    EXIT_NUMERICAL,
    EXIT_OK,
    EXIT_PARSE,
    EXIT_VALIDATION,
    main,
)


def _write(tmp_path, name, obj):
    path = tmp_path / name
    path.write_text(obj if isinstance(obj, str) else json.dumps(obj))
    return str(path)


def _circuit(ops, modes=(10,)):
    return {
        "schema": 1,
        "modes": list(modes),
        "initial": [{"kind": "vacuum"} for _ in modes],
        "ops": ops,
        "outputs": [{"kind": "variance", "operator": "x0"}],
    }


def test_run_ok(tmp_path, capsys):
    path = _write(tmp_path, "c.json", _circuit([]))
    assert main(["run", path, "-o", str(tmp_path / "out")]) == EXIT_OK
    assert "0.25" in capsys.readouterr().out
    assert json.loads((tmp_path / "out" / "results.json").read_text())["outputs"][0]["value"] == pytest.approx(0.25)


def test_run_parse_error(tmp_path):
    path = _write(tmp_path, "c.json", "{oops")
    assert main(["run", path, "-o", str(tmp_path / "out")]) == EXIT_PARSE


def test_run_validation_error(tmp_path, capsys):
    path = _write(tmp_path, "c.json", _circuit([{"kind": "Warp", "targets": [0]}]))
    assert main(["run", path, "-o", str(tmp_path / "out")]) == EXIT_VALIDATION
    assert "ops[0].kind" in capsys.readouterr().err


def test_run_singular_sector(tmp_path, capsys):
    op = {"kind": "effective_two_mode", "targets": [0, 1], "t": 1.0, "g1": 0.1, "g2": 0.1, "Gamma": 0.1,
          "delta1": 2.0, "delta2": 2.0, "delta3": 2.0}
    path = _write(tmp_path, "c.json", _circuit([op], modes=(5, 5)))
    assert main(["run", path, "-o", str(tmp_path / "out")]) == EXIT_NUMERICAL
    assert "sector" in capsys.readouterr().err


def test_synth_one_step(tmp_path):
    job = _write(tmp_path, "t.json", {"target": "x0^2 + p0^2", "t": 0.3, "tolerance": 1e-6})
    out = tmp_path / "plan.json"
    assert main(["synth", job, "-o", str(out)]) == EXIT_OK
    plan = json.loads(out.read_text())
    assert len(plan["plan"]["steps"]) == 1
    assert plan["convention"]["commutator_xp"] == "i/2"


def test_synth_closure_exhausted(tmp_path, capsys):
    prims = _write(tmp_path, "p.json", {"x0": "x0", "p0": "p0"})
    job = _write(tmp_path, "t.json", {"target": "x0^6", "t": 0.1, "max_depth": 2})
    assert main(["synth", job, "--prims", prims, "-o", str(tmp_path / "plan.json")]) == EXIT_CLOSURE
    assert "x0" in capsys.readouterr().err


def test_synth_step_budget(tmp_path):
    job = _write(tmp_path, "t.json", {"target": "x0^3", "t": 0.05, "tolerance": 1e-8, "step_budget": 200})
    assert main(["synth", job, "-o", str(tmp_path / "plan.json")]) == EXIT_NUMERICAL


def test_synth_bad_target(tmp_path):
    job = _write(tmp_path, "t.json", {"target": "x0 +", "t": 0.05})
    assert main(["synth", job, "-o", str(tmp_path / "plan.json")]) == EXIT_VALIDATION


def test_beam(capsys):
    assert main(["maser", "beam", "--duration", "1000"]) == EXIT_OK
    assert "P1 = 0.998" in capsys.readouterr().out


def _final_var_p(path):
    rows = [ln.split() for ln in path.read_text().splitlines() if ln and not ln.startswith("#")]
    assert rows[0] == ["step", "var_x", "var_p", "purity", "edge_population"]
    return [float(r[2]) for r in rows[1:]]


def test_pump_squeezes(tmp_path):
    out = tmp_path / "trace.txt"
    assert main(["maser", "pump", "--epsilon", "0.05", "--atoms", "300", "-o", str(out)]) == EXIT_OK
    vps = _final_var_p(out)
    assert vps[0] == 0.25
    assert min(vps) < 0.25


def test_pump_without_superposition_does_not_squeeze(tmp_path):
    out = tmp_path / "trace.txt"
    assert main(["maser", "pump", "--epsilon", "0", "--atoms", "300", "-o", str(out)]) == EXIT_OK
    assert min(_final_var_p(out)) >= 0.25 - 1e-6


def test_pump_rejects_bad_epsilon():
    assert main(["maser", "pump", "--epsilon", "1.0", "--atoms", "3"]) == EXIT_VALIDATION


def test_verify_negative_control(capsys):
    assert main(["verify", "--only", "1"]) == EXIT_OK
    assert main(["verify", "--only", "1", "--flip-convention"]) == EXIT_FAILED
    assert "FAIL" in capsys.readouterr().out


def test_verify_bad_number():
    assert main(["verify", "--only", "99"]) == EXIT_VALIDATION
