import jax.numpy as jnp
import pytest

import egorax

from .helpers import tree_allclose


def test_harmonic_flow_point():
    model = egorax.harmonic_oscillator(omega=1.5)
    alpha0 = jnp.array([1.0, 0.5])
    for T in (0.5, 1.0, 3.0):
        flowed = egorax.flow_point(alpha0, model, T)
        assert tree_allclose(flowed, egorax.harmonic_flow(alpha0, T, 1.5), atol=1e-6)


def test_zero_time_is_identity():
    model = egorax.pendulum()
    alpha0 = jnp.array([0.3, -0.2])
    assert tree_allclose(egorax.flow_point(alpha0, model, 0.0), alpha0)


def test_pendulum_energy_conserved():
    model = egorax.pendulum()
    solution = egorax.flow_trajectory(jnp.array([1.0, 0.0]), model, 2.0)
    assert egorax.is_successful(solution.result)
    assert solution.energy_drift <= 1e-8
    assert solution.ts[-1] == pytest.approx(2.0)


def test_backward_flow_inverts_forward():
    model = egorax.pendulum()
    forward = egorax.flow_map(model, 1.3, 1e-3)
    backward = egorax.flow_map(model, -1.3, 1e-3)
    alpha = jnp.array([0.9, 0.4])
    assert tree_allclose(backward(forward(alpha)), alpha, atol=1e-10)


def test_leapfrog_is_symplectic():
    model = egorax.pendulum()
    det = egorax.leapfrog_jacobian_determinant(model, jnp.array([0.7, 0.3]), 0.05)
    assert det == pytest.approx(1.0, abs=1e-12)


def test_leapfrog_needs_separable_model():
    model = egorax.nonseparable_example()
    with pytest.raises(ValueError, match="separable"):
        egorax.flow_point(jnp.array([0.5, 0.0]), model, 1.0, solver=egorax.Leapfrog())


def test_implicit_midpoint_conserves_energy():
    model = egorax.nonseparable_example()
    solution = egorax.flow_trajectory(jnp.array([0.5, 0.2]), model, 1.0)
    assert solution.energy_drift <= 1e-8


def test_box_exit():
    model = egorax.free_particle()
    with pytest.raises(egorax.EgoraxError) as info:
        egorax.flow_point(jnp.array([0.0, 7.0]), model, 2.0)
    assert info.value.result == egorax.RESULTS.box_exit


def test_pushforward():
    model = egorax.harmonic_oscillator()
    measure = egorax.particle_measure(
        jnp.array([[1.0, 0.0], [0.0, 1.0], [-0.5, 0.5]]), jnp.array([0.2, 0.3, 0.5])
    )
    pushed = egorax.pushforward(measure, model, 1.0)
    assert tree_allclose(pushed.masses, measure.masses)
    expected = jnp.stack([egorax.harmonic_flow(a, 1.0) for a in measure.locations])
    assert tree_allclose(pushed.locations, expected, atol=1e-6)
    signed = egorax.PhaseSpaceMeasure(measure.locations, measure.masses, signed=True)
    with pytest.raises(ValueError, match="signed"):
        egorax.pushforward(signed, model, 1.0)


def test_flow_lipschitz_of_rotation():
    model = egorax.harmonic_oscillator()
    lipschitz = egorax.flow_lipschitz(model, 1.0, n_samples=16)
    assert lipschitz == pytest.approx(1.0, rel=1e-4)


def test_estimate_lipschitz():
    lipschitz, report = egorax.estimate_lipschitz(egorax.pendulum())
    assert lipschitz == pytest.approx(1.0, rel=1e-6)
    assert report.potential_hessian_sup == pytest.approx(1.0, rel=1e-6)
    lipschitz, _ = egorax.estimate_lipschitz(egorax.harmonic_oscillator(omega=2.0))
    assert lipschitz == pytest.approx(2.5, rel=1e-6)


def test_harmonic_quantum_fidelity():
    grid = egorax.make_grid(1, 0.05, -6.0, 6.0, 256)
    assert egorax.harmonic_fidelity_error(grid, 1.0) < 1e-6
    assert egorax.calibrate_time_step(grid, 1.0) <= egorax.default_time_step(0.05)


def test_split_step_matches_dense():
    grid = egorax.make_grid(1, 0.1, -6.0, 6.0, 256)
    model = egorax.pendulum()
    state = egorax.coherent_state(grid, jnp.array([1.0, 0.0]))
    split = egorax.propagate_quantum(state, model, 0.5, dt=1e-3)
    dense = egorax.propagate_quantum(state, model, 0.5, solver=egorax.DenseEigen())
    fidelity = abs(complex(egorax.overlap(grid, split.psi, dense.psi)))
    assert fidelity == pytest.approx(1.0, abs=1e-5)


def test_time_step_must_divide():
    grid = egorax.make_grid(1, 0.1, -6.0, 6.0, 128)
    state = egorax.coherent_state(grid, jnp.zeros(2))
    with pytest.raises(ValueError, match="does not divide"):
        egorax.propagate_quantum(state, egorax.pendulum(), 1.0, dt=0.3)


def test_boundary_leak_during_propagation():
    grid = egorax.make_grid(1, 0.05, -4.0, 4.0, 256)
    state = egorax.coherent_state(grid, jnp.array([0.0, 2.0]))
    with pytest.raises(egorax.EgoraxError) as info:
        egorax.propagate_quantum(state, egorax.free_particle(), 2.0)
    assert info.value.result == egorax.RESULTS.boundary_leak


def test_dense_propagator_is_unitary():
    grid = egorax.make_grid(1, 0.1, -5.0, 5.0, 128)
    U = egorax.dense_propagator(egorax.pendulum(), grid, 0.7)
    product = U.entries @ U.entries.conj().T
    assert tree_allclose(product, jnp.eye(128, dtype=complex), atol=1e-10)
    identity = egorax.identity_operator(grid)
    evolved = egorax.evolve_operator(U, identity)
    assert tree_allclose(evolved.entries, identity.entries, atol=1e-10)


@pytest.mark.parametrize(
    "solver, model",
    [
        (egorax.Leapfrog(), egorax.pendulum()),
        (egorax.ImplicitMidpoint(), egorax.pendulum()),
        (egorax.ImplicitMidpoint(), egorax.nonseparable_example()),
    ],
)
def test_classical_solvers_are_second_order(solver, model):
    order = egorax.classical_convergence_order(
        jnp.array([1.0, 0.0]), model, 1.0, 0.1, solver=solver
    )
    assert 1.8 <= order <= 2.2


def test_split_step_is_second_order(grid_1d):
    state = egorax.coherent_state(grid_1d, jnp.array([1.0, 0.0]))
    order = egorax.quantum_convergence_order(
        state, egorax.pendulum(), 1.0, 0.02, solver=egorax.SplitStep()
    )
    assert 1.8 <= order <= 2.2


def test_dense_eigen_has_no_convergence_order(grid_1d):
    state = egorax.coherent_state(grid_1d, jnp.array([1.0, 0.0]))
    with pytest.raises(ValueError, match="exact in time"):
        egorax.quantum_convergence_order(
            state, egorax.pendulum(), 1.0, 0.1, solver=egorax.DenseEigen()
        )
