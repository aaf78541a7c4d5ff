import math

import jax.numpy as jnp
import pytest

import egorax


def _rows(hbars, values):
    return [{"hbar": h, "distance": v} for h, v in zip(hbars, values)]


def test_fit_scaling_recovers_power_law():
    hbars = [0.2, 0.1, 0.05, 0.025, 0.0125]
    rows = _rows(hbars, [3 * h**0.5 for h in hbars])
    fit = egorax.fit_scaling(rows, "hbar", "distance")
    assert fit.slope == pytest.approx(0.5, abs=1e-10)
    assert fit.intercept == pytest.approx(math.log(3), abs=1e-10)
    assert fit.ci_low == pytest.approx(0.5, abs=1e-8)
    assert fit.n_points == 5
    assert fit.to_dict()["slope"] == pytest.approx(0.5)


def test_fit_scaling_refuses_thin_data():
    with pytest.raises(ValueError, match="Insufficient points"):
        egorax.fit_scaling(_rows([0.1, 0.05, 0.01], [1, 1, 1]), "hbar", "distance")
    with pytest.raises(ValueError, match="Insufficient span"):
        egorax.fit_scaling(
            _rows([0.1, 0.08, 0.06, 0.04], [1, 1, 1, 1]), "hbar", "distance"
        )
    with pytest.raises(ValueError, match="positive"):
        egorax.fit_scaling(
            _rows([0.2, 0.1, 0.05, 0.01], [1, 0, 1, 1]), "hbar", "distance"
        )


def test_observables():
    alpha = jnp.array([0.3, 0.7])
    assert float(egorax.observable("sin")(alpha)) == pytest.approx(math.sin(0.3))
    assert float(egorax.observable("p")(alpha)) == pytest.approx(0.7)
    assert float(egorax.observable("cos_cos")(alpha)) == pytest.approx(
        math.cos(0.3) * math.cos(0.7)
    )
    with pytest.raises(ValueError):
        egorax.observable("energy")


def test_operator_egorov_is_exact_for_linear_flows():
    grid = egorax.make_grid(1, 0.1, -5.0, 5.0, 128)
    model = egorax.harmonic_oscillator()
    difference, _ = egorax.operator_egorov_terms(
        model, grid, egorax.observable("x"), 1.0
    )
    assert difference < 1e-4


def test_mollification_term_of_sine():
    grid = egorax.make_grid(1, 0.1, -5.0, 5.0, 128)
    difference, mollification = egorax.operator_egorov_terms(
        egorax.pendulum(), grid, egorax.observable("sin"), 0.0
    )
    assert difference == 0.0
    # sin ∗ γ_ℏ = e^{−ℏ/2} sin
    sup = float(jnp.max(jnp.abs(jnp.sin(grid.x_axis()))))
    assert mollification == pytest.approx((1 - math.exp(-0.05)) * sup, rel=1e-3)


def test_meanfield_preflight_needs_mixture():
    scenario = egorax.load_scenario("pendulum-meanfield").with_overrides(
        initial=egorax.InitialState(kind="coherent", center=(1.0, 0.0))
    )
    with pytest.raises(ValueError, match="coherent-mixture"):
        egorax.preflight(scenario)


def test_preflight_flags_escaping_flow():
    scenario = egorax.parse_scenario(
        """\
name: escape
operation: egorov
model:
  name: free
initial:
  kind: coherent
  center: [0.0, 3.0]
T_list: [1.8]
hbar_list: [0.1]
"""
    )
    with pytest.raises(egorax.EgoraxError) as info:
        egorax.preflight(scenario)
    assert info.value.result == egorax.RESULTS.boundary_leak


@pytest.mark.slow
def test_harmonic_sanity_sweep():
    scenario = egorax.load_scenario("harmonic-sanity").with_overrides(
        hbar_list=(0.2, 0.1, 0.05, 0.02)
    )
    report = egorax.run_scenario(scenario, jobs=2)
    assert report.operation == "egorov"
    assert not report.failed_rows
    assert len(report.rows) == 8
    gates = {g.name: g for g in report.gates}
    assert gates["zero_time[T=0,p=2]"].verdict == "pass"
    assert gates["slope[T=1,p=2]"].verdict != "skipped"
    assert gates["harmonic_oracle"].verdict == "pass"
    for row in report.rows:
        assert row["distance"] >= 0
        assert "oracle_distance" in row
        assert row["oracle_tv"] <= 1e-3
        assert abs(row["distance"] - row["oracle_distance"]) <= row["oracle_tolerance"]
    assert "husimi_T0" in report.artifacts


@pytest.mark.slow
def test_harmonic_localization():
    scenario = egorax.parse_scenario(
        """\
name: harmonic-localization
operation: localization
model:
  name: harmonic
initial:
  kind: coherent
  center: [1.0, 0.0]
T_list: [0.0, 0.5]
hbar_list: [0.1, 0.05]
"""
    )
    report = egorax.run_scenario(scenario)
    assert report.passed
    for row in report.rows:
        # Coherent states stay coherent: Q(T) = ℏ.
        assert row["q0"] == pytest.approx(row["hbar"], rel=1e-4)
        assert row["measured"] == pytest.approx(1.0, abs=1e-4)
    assert report.constants["lipschitz"] == pytest.approx(1.0, rel=1e-6)


@pytest.mark.slow
def test_triangle_conventions_resolved_once_per_job(monkeypatch):
    import egorax._experiments as experiments

    calls = {"conventions": 0, "noising": 0}

    def counting(name, fn):
        def wrapped(*args, **kwargs):
            calls[name] += 1
            return fn(*args, **kwargs)

        return wrapped

    monkeypatch.setattr(
        experiments,
        "resolve_conventions",
        counting("conventions", experiments.resolve_conventions),
    )
    monkeypatch.setattr(
        experiments, "noising_channel", counting("noising", experiments.noising_channel)
    )
    scenario = egorax.load_scenario("harmonic-sanity").with_overrides(
        T_list=(1.0,), hbar_list=(0.1,), p_list=(1.0, 2.0), triangle=True
    )
    report = egorax.run_scenario(scenario)
    assert not report.failed_rows
    assert len(report.rows) == 2
    assert calls == {"conventions": 1, "noising": 1}
    radii = [row["noising_radius"] for row in report.rows]
    assert radii[0] != pytest.approx(radii[1])
    for row in report.rows:
        assert row["triangle_holds"]
