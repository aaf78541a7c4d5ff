import dataclasses

import pytest

import egorax


_MINIMAL = """\
name: tiny
operation: egorov
model:
  name: pendulum
initial:
  kind: coherent
  center: [1.0, 0.0]
T_list: [0.0, 1.0]
hbar_list: [0.1, 0.05]
"""


def test_parse_minimal():
    scenario = egorax.parse_scenario(_MINIMAL)
    assert scenario.name == "tiny"
    assert scenario.model.build().name == "pendulum"
    assert scenario.initial.center == (1.0, 0.0)
    assert scenario.T_list == (0.0, 1.0)
    assert scenario.p_list == (2.0,)
    assert scenario.solver == egorax.SolverPolicy()


def test_unknown_key_reports_line():
    text = _MINIMAL + "solver:\n  transport: exact\n  colour: red\n"
    with pytest.raises(egorax.ScenarioError, match=r"scenario.yaml:12: solver.colour"):
        egorax.parse_scenario(text, source="scenario.yaml")


def test_missing_key():
    text = _MINIMAL.replace("operation: egorov\n", "")
    with pytest.raises(egorax.ScenarioError, match="missing required key 'operation'"):
        egorax.parse_scenario(text)


def test_bad_values():
    with pytest.raises(egorax.ScenarioError, match="expected a list of numbers"):
        egorax.parse_scenario(_MINIMAL.replace("[0.1, 0.05]", "0.1"))
    with pytest.raises(egorax.ScenarioError, match="Unknown operation"):
        egorax.parse_scenario(_MINIMAL.replace("egorov", "teleport"))
    with pytest.raises(egorax.ScenarioError, match="invalid YAML"):
        egorax.parse_scenario("name: [unclosed\n")


def test_scenario_error_is_value_error():
    assert issubclass(egorax.ScenarioError, ValueError)


def test_bundled_scenarios_parse():
    names = egorax.bundled_scenarios()
    assert "harmonic-sanity" in names
    assert "pendulum-egorov" in names
    for name in names:
        scenario = egorax.load_scenario(name)
        assert scenario.name == name


def test_unknown_scenario():
    with pytest.raises(egorax.ScenarioError, match="not a bundled scenario"):
        egorax.load_scenario("no-such-scenario")


def test_grid_policy_fits_momenta():
    policy = egorax.GridPolicy()
    grid = policy.make_grid(1, 0.05)
    assert grid.momentum_limit[0] >= policy.p_extent
    assert grid.x_max[0] >= policy.x_extent
    assert egorax.GridPolicy(n_x=256).make_grid(1, 0.05).n_x == 256


def test_initial_states_build():
    grid = egorax.make_grid(1, 0.1, -6.0, 6.0, 256)
    mixture = egorax.InitialState(kind="coherent_mixture", center=(0.5, 0.0), order=3)
    assert mixture.build(grid).n_branches == 9
    cat = egorax.InitialState(kind="cat", separation=2.0)
    assert cat.build(grid).n_branches == 1


def test_overrides():
    scenario = egorax.parse_scenario(_MINIMAL)
    changed = scenario.with_overrides(seed=7)
    assert changed.seed == 7
    assert dataclasses.asdict(changed)["model"]["name"] == "pendulum"
