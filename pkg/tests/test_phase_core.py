import math

import jax.numpy as jnp
import pytest

import egorax

from .helpers import norm, random_state, tree_allclose


def test_grid_validation():
    with pytest.raises(ValueError, match="power of two"):
        egorax.make_grid(1, 0.1, -4.0, 4.0, 100)
    with pytest.raises(ValueError, match="hbar"):
        egorax.make_grid(1, 0.0, -4.0, 4.0, 128)
    with pytest.raises(ValueError, match="Degenerate"):
        egorax.make_grid(1, 0.1, 4.0, -4.0, 128)
    with pytest.raises(ValueError, match="dim"):
        egorax.make_grid(3, 0.1, -4.0, 4.0, 16)


def test_grid_momentum_axis(grid_1d):
    assert grid_1d.momentum_limit[0] == pytest.approx(
        math.pi * grid_1d.hbar / grid_1d.dx[0]
    )
    assert float(jnp.max(jnp.abs(grid_1d.p_axis()))) == pytest.approx(
        grid_1d.momentum_limit[0]
    )


def test_coherent_state_normalised_and_centred(grid_1d):
    alpha = jnp.array([1.0, 0.5])
    state = egorax.coherent_state(grid_1d, alpha)
    assert norm(grid_1d, state.psi) == pytest.approx(1.0, abs=1e-10)
    assert tree_allclose(egorax.phase_space_mean(state), alpha, atol=1e-8)


def test_coherent_state_margin(grid_1d):
    with pytest.raises(ValueError, match="within 5 sqrt"):
        egorax.coherent_state(grid_1d, jnp.array([5.5, 0.0]))


def test_translate_vacuum(grid_1d):
    alpha = jnp.array([0.7, -0.3])
    vacuum = egorax.coherent_state(grid_1d, jnp.zeros(2))
    moved = egorax.translate(vacuum, alpha)
    expected = egorax.coherent_state(grid_1d, alpha)
    assert tree_allclose(moved.psis, expected.psis, atol=1e-8)


def test_translation_composition(grid_1d):
    # τ_α τ_β = exp(−iω(α, β)/(2ℏ)) τ_{α+β}
    alpha = jnp.array([0.4, 0.2])
    beta = jnp.array([-0.3, 0.5])
    state = egorax.coherent_state(grid_1d, jnp.array([0.2, 0.1]))
    composed = egorax.translate(egorax.translate(state, beta), alpha)
    direct = egorax.translate(state, alpha + beta)
    phase = jnp.exp(
        -1j * egorax.symplectic_form(alpha, beta) / (2 * grid_1d.hbar)
    )
    assert tree_allclose(composed.psis, phase * direct.psis, atol=1e-8)


def test_symplectic_form_antisymmetric():
    alpha = jnp.array([1.0, 2.0])
    beta = jnp.array([-0.5, 3.0])
    assert float(egorax.symplectic_form(alpha, beta)) == pytest.approx(3.5)
    assert float(egorax.symplectic_form(beta, alpha)) == pytest.approx(-3.5)


def test_boundary_monitor(grid_1d):
    psi = egorax.coherent_wavefunction(grid_1d, jnp.array([5.5, 0.0]))
    state = egorax.pure_state(grid_1d, psi)
    with pytest.raises(egorax.EgoraxError) as info:
        egorax.check_boundary(state)
    assert info.value.result == egorax.RESULTS.boundary_leak
    inside = egorax.coherent_state(grid_1d, jnp.zeros(2))
    assert egorax.boundary_mass(inside) < 1e-12


def test_mixture_weights(grid_1d):
    atoms = [(jnp.array([0.5, 0.0]), 0.5), (jnp.array([-0.5, 0.0]), 0.25)]
    with pytest.raises(ValueError, match="sum to"):
        egorax.mix_coherent(grid_1d, atoms)
    atoms = [(jnp.array([0.5, 0.0]), 0.5), (jnp.array([-0.5, 0.0]), 0.5)]
    state = egorax.mix_coherent(grid_1d, atoms)
    assert state.n_branches == 2
    assert state.trace() == pytest.approx(1.0, abs=1e-10)
    assert tree_allclose(egorax.phase_space_mean(state), jnp.zeros(2), atol=1e-8)


def test_gaussian_mixture_atoms_moments():
    mean = jnp.array([1.0, -0.5])
    locations, weights = egorax.gaussian_mixture_atoms(mean, 0.1, order=3)
    assert locations.shape == (9, 2)
    assert float(jnp.sum(weights)) == pytest.approx(1.0)
    centred = locations - mean
    assert tree_allclose(jnp.sum(weights[:, None] * locations, axis=0), mean)
    variances = jnp.sum(weights[:, None] * centred**2, axis=0)
    assert tree_allclose(variances, 0.1 * jnp.ones(2))


def test_cat_and_random_states(grid_1d):
    cat = egorax.cat_state(grid_1d, jnp.array([1.0, 0.0]))
    assert norm(grid_1d, cat.psi) == pytest.approx(1.0, abs=1e-10)
    assert tree_allclose(egorax.phase_space_mean(cat), jnp.zeros(2), atol=1e-8)
    state = random_state(grid_1d, seed=3)
    assert state.n_branches == 2
    assert state.trace() == pytest.approx(1.0, abs=1e-10)
    again = random_state(grid_1d, seed=3)
    assert tree_allclose(state, again)


def test_make_state_rejects_unnormalised(grid_1d):
    psi = 2 * egorax.coherent_wavefunction(grid_1d, jnp.zeros(2))
    with pytest.raises(ValueError, match="unit L2 norm"):
        egorax.make_state(grid_1d, jnp.ones(1), psi)


def test_first_moments(grid_1d):
    alpha = jnp.array([0.7, -0.4])
    state = egorax.coherent_state(grid_1d, alpha)
    assert tree_allclose(egorax.expectation_position(state), alpha[:1], atol=1e-8)
    assert tree_allclose(egorax.expectation_momentum(state), alpha[1:], atol=1e-8)


def test_squeezed_state_at_coherent_width(grid_1d):
    alpha = jnp.array([-0.5, 0.3])
    squeezed = egorax.squeezed_state(grid_1d, alpha, math.sqrt(grid_1d.hbar))
    coherent = egorax.coherent_state(grid_1d, alpha)
    assert tree_allclose(squeezed.psi, coherent.psi, atol=1e-10)
    narrow = egorax.squeezed_state(grid_1d, alpha, 0.1)
    x = grid_1d.x_axis()
    spread = jnp.sum(jnp.abs(narrow.psi) ** 2 * (x - alpha[0]) ** 2) * grid_1d.dx[0]
    assert float(spread) == pytest.approx(0.1**2 / 2, rel=1e-6)


def test_hermite_states(grid_1d):
    alpha = jnp.array([0.6, 0.2])
    coherent = egorax.coherent_state(grid_1d, alpha)
    ground = egorax.hermite_state(grid_1d, alpha, 0)
    excited = egorax.hermite_state(grid_1d, alpha, 1)
    assert abs(complex(egorax.overlap(grid_1d, coherent.psi, ground.psi))) == (
        pytest.approx(1.0, abs=1e-8)
    )
    assert abs(complex(egorax.overlap(grid_1d, ground.psi, excited.psi))) < 1e-8
    assert tree_allclose(egorax.phase_space_mean(excited), alpha, atol=1e-8)
