import json
import math

import jax.numpy as jnp
import pytest

import egorax
from egorax._cli import EXIT_ERROR, EXIT_OK, EXIT_USAGE, main


def test_usage_errors(capsys):
    assert main([]) == EXIT_USAGE
    assert main(["tool", "teleport"]) == EXIT_USAGE
    bad_alpha = ["tool", "flow", "--alpha", "one,two", "--T", "1", "--model", "free"]
    assert main(bad_alpha) == EXIT_USAGE
    assert "error" in capsys.readouterr().err


def test_tool_flow(capsys, tmp_path):
    out = tmp_path / "trajectory.csv"
    code = main(
        [
            "tool", "flow", "--model", "harmonic", "--alpha", "1,0", "--T", "1",
            "--out", str(out),
        ]
    )
    assert code == EXIT_OK
    x, p = (float(v) for v in capsys.readouterr().out.split())
    assert x == pytest.approx(math.cos(1.0), abs=1e-6)
    assert p == pytest.approx(-math.sin(1.0), abs=1e-6)
    assert out.read_text().splitlines()[0] == "t,x1,p1,H"


def test_tool_flow_box_exit(capsys):
    code = main(["tool", "flow", "--model", "free", "--alpha", "0,7", "--T", "2"])
    assert code == EXIT_ERROR
    assert "box_exit" in capsys.readouterr().err


def test_tool_wasserstein(capsys, tmp_path):
    egorax.save_measure_json(tmp_path / "mu.json", egorax.dirac(jnp.array([0.0, 0.0])))
    egorax.save_measure_json(tmp_path / "nu.json", egorax.dirac(jnp.array([3.0, 4.0])))
    code = main(
        [
            "tool", "wasserstein", str(tmp_path / "mu.json"), str(tmp_path / "nu.json"),
            "--p", "1", "--out", str(tmp_path / "result.json"),
        ]
    )
    assert code == EXIT_OK
    words = capsys.readouterr().out.split()
    assert words[0] == "distance"
    assert float(words[1]) == pytest.approx(5.0)
    payload = json.loads((tmp_path / "result.json").read_text())
    assert payload["plan"]["masses"] == [1.0]


def test_tool_husimi_and_sobolev(capsys, tmp_path):
    grid = egorax.make_grid(1, 0.1, -5.0, 5.0, 128)
    state = str(tmp_path / "state.egx")
    egorax.save_state(state, egorax.coherent_state(grid, jnp.zeros(2)))
    code = main(["tool", "husimi", state, "--out", str(tmp_path / "h.csv")])
    assert code == EXIT_OK
    assert (tmp_path / "h.csv").read_text().startswith("x1,p1,mass")
    code = main(["tool", "sobolev", state, "--k", "1", "--form", "quadratic"])
    assert code == EXIT_OK
    assert float(capsys.readouterr().out) == pytest.approx(math.sqrt(0.1), rel=1e-6)


def test_tool_znorm_observable_and_scenario(capsys, tmp_path):
    grid = egorax.make_grid(1, 0.1, -4.0, 4.0, 64)
    state = str(tmp_path / "state.egx")
    egorax.save_state(state, egorax.coherent_state(grid, jnp.array([0.5, 0.0])))

    def znorm(*extra):
        assert main(["tool", "znorm", state, "--k", "1", *extra]) == EXIT_OK
        return float(capsys.readouterr().out)

    lattice = egorax.covering_lattice(
        egorax.load_state(state), spacing=math.sqrt(0.1), tail=1e-6
    )
    expected = egorax.z_norm(
        egorax.weyl_quantize(egorax.observable("sin"), grid), 1, lattice
    )
    sin = znorm("--observable", "sin")
    assert sin == pytest.approx(float(expected), rel=1e-10)
    assert znorm() != pytest.approx(sin, rel=1e-6)
    # The bundled scenario quantises sin x under the pendulum.
    assert znorm("--scenario", "pendulum-operator-egorov") == pytest.approx(sin)
    evolved = znorm("--symbol", "evolved", "--T", "0.5", "--observable", "sin")
    from_scenario = znorm(
        "--symbol", "evolved", "--T", "0.5", "--scenario", "pendulum-operator-egorov"
    )
    assert from_scenario == pytest.approx(evolved)


def test_tool_znorm_malformed_scenario(capsys, tmp_path):
    grid = egorax.make_grid(1, 0.1, -4.0, 4.0, 64)
    state = str(tmp_path / "state.egx")
    egorax.save_state(state, egorax.coherent_state(grid, jnp.zeros(2)))
    code = main(["tool", "znorm", state, "--scenario", "no-such-scenario"])
    assert code == EXIT_USAGE
    assert "not a bundled scenario" in capsys.readouterr().err


def test_malformed_scenario(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    path.write_text(
        "name: bad\n"
        "operation: egorov\n"
        "model:\n"
        "  name: pendulum\n"
        "  spin: 1\n"
        "initial:\n"
        "  kind: coherent\n"
    )
    code = main(["run", str(path), "--out", str(tmp_path / "out")])
    assert code == EXIT_USAGE
    assert EXIT_USAGE == 64
    assert not (tmp_path / "out").exists()
    assert "bad.yaml:5: model.spin" in capsys.readouterr().err


def test_unknown_scenario_name(tmp_path):
    assert main(["run", "no-such-scenario", "--out", str(tmp_path)]) == EXIT_USAGE


@pytest.mark.slow
def test_preflight_only(tmp_path, monkeypatch):
    monkeypatch.setenv("EGORAX_OUTPUT_DIR", str(tmp_path / "out"))
    code = main(["run", "pendulum-localization", "--preflight-only", "--seed", "3"])
    assert code == EXIT_OK
    preflight = json.loads((tmp_path / "out" / "preflight.json").read_text())
    assert preflight["name"] == "pendulum-localization"
    scenario = json.loads((tmp_path / "out" / "scenario.json").read_text())
    assert scenario["seed"] == 3
