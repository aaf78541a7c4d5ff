import json
import struct

import jax.numpy as jnp
import pytest

import egorax

from .helpers import random_state, tree_allclose


def test_state_file(tmp_path, grid_1d):
    state = random_state(grid_1d, seed=3, rank=3)
    path = tmp_path / "state.egx"
    egorax.save_state(path, state)
    loaded = egorax.load_state(path)
    assert loaded.grid == state.grid
    assert tree_allclose(loaded.weights, state.weights)
    assert tree_allclose(loaded.psis, state.psis)


def test_measure_file(tmp_path, grid_1d):
    state = egorax.coherent_state(grid_1d, jnp.array([0.5, 0.0]))
    measure = egorax.husimi(state, egorax.covering_lattice(state))
    path = tmp_path / "measure.egx"
    egorax.save_measure(path, measure)
    loaded = egorax.read_measure(path)
    assert loaded.lattice == measure.lattice
    assert tree_allclose(loaded.masses, measure.masses)
    assert loaded.dropped_mass == measure.dropped_mass


def test_measure_json(tmp_path):
    measure = egorax.particle_measure(jnp.array([[0.0, 1.0], [2.0, 3.0]]))
    path = tmp_path / "measure.json"
    egorax.save_measure_json(path, measure)
    loaded = egorax.read_measure(path)
    assert tree_allclose(loaded.locations, measure.locations)
    assert tree_allclose(loaded.masses, measure.masses)


def test_version_mismatch(tmp_path, grid_1d):
    path = tmp_path / "state.egx"
    egorax.save_state(path, egorax.coherent_state(grid_1d, jnp.zeros(2)))
    data = bytearray(path.read_bytes())
    struct.pack_into("<I", data, 8, 99)
    path.write_bytes(bytes(data))
    with pytest.raises(ValueError, match="format version 99"):
        egorax.load_state(path)


def test_wrong_kind_of_file(tmp_path, grid_1d):
    path = tmp_path / "state.egx"
    egorax.save_state(path, egorax.coherent_state(grid_1d, jnp.zeros(2)))
    with pytest.raises(ValueError, match="magic"):
        egorax.load_measure(path)


def test_problem_and_result_files(tmp_path):
    mu = egorax.particle_measure(jnp.array([[0.0, 0.0], [1.0, 0.0]]))
    nu = egorax.particle_measure(jnp.array([[0.0, 1.0], [1.0, 1.0]]))
    problem = egorax.TransportProblem(mu, nu, 2.0)
    egorax.save_problem(tmp_path / "problem.json", problem)
    loaded = egorax.load_problem(tmp_path / "problem.json")
    result = egorax.wasserstein(loaded, return_plan=True)
    assert result.distance == pytest.approx(1.0)
    egorax.save_result(tmp_path / "result.json", result, include_plan=True)
    payload = json.loads((tmp_path / "result.json").read_text())
    assert payload["format_version"] == 1
    assert payload["distance"] == pytest.approx(1.0)
    assert sum(payload["plan"]["masses"]) == pytest.approx(1.0)


def test_measure_csv(tmp_path):
    measure = egorax.particle_measure(jnp.array([[0.0, 1.0], [2.0, 3.0]]))
    egorax.measure_to_csv(tmp_path / "m.csv", measure)
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "x1,p1,mass"
    assert len(lines) == 3


def test_sweep_report_files(tmp_path):
    report = egorax.SweepReport(
        name="demo",
        operation="egorov",
        rows=[
            {"hbar": 0.1, "distance": 0.25, "status": "ok"},
            {"hbar": 0.05, "distance": float("nan"), "status": "box_exit"},
        ],
        gates=[egorax.Gate("slope", "pass", {"slope": 0.5})],
        timings={"job": 1.0},
    )
    report.save_json(tmp_path / "report.json")
    report.save_csv(tmp_path / "report.csv")
    payload = json.loads((tmp_path / "report.json").read_text())
    assert payload["passed"]
    assert payload["rows"][1]["distance"] == "nan"
    assert "timings" not in payload
    lines = (tmp_path / "report.csv").read_text().splitlines()
    assert lines[0] == "distance,hbar,status"
    assert lines[1] == "0.25,0.1,ok"
    assert [row["status"] for row in report.failed_rows] == ["box_exit"]


def test_check_report_file(tmp_path):
    report = egorax.CheckReport("chain")
    report.add(egorax.CheckEntry("H1", measured=0.2, bound=1.0, passed=True))
    report.add(egorax.CheckEntry("H2", measured=2.0, bound=1.0, passed=False))
    report.save(tmp_path / "check.json")
    payload = json.loads((tmp_path / "check.json").read_text())
    assert not payload["passed"]
    assert [e["name"] for e in payload["entries"]] == ["H1", "H2"]
