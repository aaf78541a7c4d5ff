import math

import jax.numpy as jnp
import numpy as np
import pytest

import egorax

from .helpers import tree_allclose


def _moments(measure):
    masses = np.asarray(measure.masses)
    locations = np.asarray(measure.locations)
    total = masses.sum()
    mean = (masses[:, None] * locations).sum(axis=0) / total
    variance = (masses[:, None] * (locations - mean) ** 2).sum(axis=0) / total
    return total, mean, variance


def test_husimi_of_coherent_state(grid_1d):
    alpha = jnp.array([0.8, -0.4])
    state = egorax.coherent_state(grid_1d, alpha)
    measure = egorax.husimi(state, egorax.covering_lattice(state))
    total, mean, variance = _moments(measure)
    assert not measure.signed
    assert float(jnp.min(measure.masses)) >= 0
    assert total == pytest.approx(1.0, abs=1e-6)
    assert np.allclose(mean, np.asarray(alpha), atol=1e-6)
    # |<β|α>|² = exp(−|α − β|² / (2ℏ)): variance ℏ per coordinate.
    assert np.allclose(variance, grid_1d.hbar, rtol=1e-3)


def test_husimi_coarse_lattice_rejected(grid_1d):
    state = egorax.coherent_state(grid_1d, jnp.zeros(2))
    coarse = egorax.make_lattice((-2.0, -2.0), math.sqrt(grid_1d.hbar), (20, 20))
    with pytest.raises(ValueError, match="spacing"):
        egorax.husimi(state, coarse)


def test_husimi_coverage_violation(grid_1d):
    state = egorax.coherent_state(grid_1d, jnp.zeros(2))
    h = math.sqrt(grid_1d.hbar) / 4
    # Covers only the right half plane.
    lattice = egorax.make_lattice((0.0, -2.0), h, (40, 80))
    with pytest.raises(egorax.EgoraxError) as info:
        egorax.husimi(state, lattice)
    assert info.value.result == egorax.RESULTS.coverage_violation


def test_covering_lattice_offset(grid_1d):
    state = egorax.coherent_state(grid_1d, jnp.zeros(2))
    h = math.sqrt(grid_1d.hbar) / 4
    offset = jnp.array([0.013, -0.021])
    lattice = egorax.covering_lattice(state, spacing=h, offset=offset)
    for origin, shift in zip(lattice.origin, np.asarray(offset)):
        steps = (origin - shift) / h
        assert steps == pytest.approx(round(steps), abs=1e-9)


def test_wigner_of_coherent_state(grid_1d):
    alpha = jnp.array([0.5, 0.3])
    measure = egorax.wigner(egorax.coherent_state(grid_1d, alpha))
    total, mean, variance = _moments(measure)
    assert measure.signed
    assert total == pytest.approx(1.0, abs=1e-8)
    assert np.allclose(mean, np.asarray(alpha), atol=1e-6)
    assert np.allclose(variance, grid_1d.hbar / 2, rtol=1e-3)


def test_wigner_of_cat_state_is_negative(grid_1d):
    cat = egorax.cat_state(grid_1d, jnp.array([1.5, 0.0]))
    measure = egorax.wigner(cat)
    assert float(jnp.min(measure.masses)) < 0
    assert measure.total_mass() == pytest.approx(1.0, abs=1e-8)


def test_resolve_conventions(grid_1d):
    with pytest.warns(UserWarning, match="differ from the displayed"):
        conventions = egorax.resolve_conventions(grid_1d)
    hbar = grid_1d.hbar
    assert not conventions.matches_displayed
    assert conventions.wigner_variance == pytest.approx(hbar / 2, rel=1e-3)
    assert conventions.husimi_smoothing == pytest.approx(hbar / 2, rel=1e-2)
    assert conventions.noising_variance == pytest.approx(hbar, rel=1e-2)


def test_noising_channel(grid_1d):
    alpha = jnp.array([0.4, 0.2])
    state = egorax.coherent_state(grid_1d, alpha)
    noised = egorax.noising_channel(state)
    assert noised.trace() == pytest.approx(1.0, abs=1e-10)
    assert noised.n_branches > 1
    assert tree_allclose(egorax.phase_space_mean(noised), alpha, atol=1e-6)


def test_translation_mixture(grid_1d):
    state = egorax.coherent_state(grid_1d, jnp.zeros(2))
    mixed = egorax.translation_mixture(state, order=3)
    assert mixed.n_branches == 9
    assert mixed.trace() == pytest.approx(1.0, abs=1e-10)
    with pytest.raises(egorax.EgoraxError):
        egorax.translation_mixture(state, order=5, max_branches=10)


def test_weyl_quantize_polynomials():
    grid = egorax.make_grid(1, 0.1, -5.0, 5.0, 128)
    identity = egorax.weyl_quantize(lambda alpha: jnp.ones(()), grid)
    assert tree_allclose(identity.entries, jnp.eye(128, dtype=complex), atol=1e-10)
    position = egorax.weyl_quantize(lambda alpha: alpha[0], grid)
    assert tree_allclose(
        position.entries, jnp.diag(grid.x_axis()).astype(complex), atol=1e-10
    )
    assert position.hermitian


def test_expectation_of_position():
    grid = egorax.make_grid(1, 0.1, -5.0, 5.0, 128)
    state = egorax.coherent_state(grid, jnp.array([0.7, 0.0]))
    position = egorax.weyl_quantize(lambda alpha: alpha[0], grid)
    assert egorax.expectation(position, state) == pytest.approx(0.7, abs=1e-8)


def test_translation_operator_matches_translate():
    grid = egorax.make_grid(1, 0.1, -5.0, 5.0, 128)
    beta = jnp.array([0.45, -0.2])
    state = egorax.coherent_state(grid, jnp.array([-0.5, 0.3]))
    matrix = egorax.translation_operator(grid, beta)
    assert tree_allclose(
        matrix.apply(state.psis), egorax.translate(state, beta).psis, atol=1e-8
    )
    unitarity = matrix.entries.conj().T @ matrix.entries
    assert tree_allclose(unitarity, jnp.eye(128, dtype=complex), atol=1e-8)


def test_mollified_sine():
    grid = egorax.make_grid(1, 0.2, -5.0, 5.0, 128)
    mollified = egorax.mollify_symbol(lambda alpha: jnp.sin(alpha[0]), grid)
    for x in (0.3, 1.1, -2.0):
        value = float(mollified(jnp.array([x, 0.4])))
        assert value == pytest.approx(math.exp(-0.1) * math.sin(x), rel=1e-10)


def test_dense_operators_need_small_grids():
    big = egorax.make_grid(1, 0.01, -5.0, 5.0, 2048)
    with pytest.raises(ValueError, match="n_x <= 1024"):
        egorax.weyl_quantize(lambda alpha: alpha[0], big)


def test_wavepacket_quantization_resolves_identity():
    grid = egorax.make_grid(1, 0.1, -5.0, 5.0, 128)
    lattice = egorax.make_lattice((-3.0, -3.0), 0.15, (41, 41))
    identity = egorax.wavepacket_quantize(lambda alpha: jnp.ones(()), grid, lattice)
    state = egorax.coherent_state(grid, jnp.array([0.2, -0.1]))
    assert tree_allclose(identity.apply(state.psis), state.psis, atol=1e-6)
    positive = egorax.wavepacket_quantize(
        lambda alpha: jnp.exp(-jnp.sum(alpha**2)), grid, lattice
    )
    assert positive.hermitian
    assert float(jnp.min(jnp.linalg.eigvalsh(positive.entries))) > -1e-10


def test_convolve_gaussian_adds_variance(grid_1d):
    state = egorax.coherent_state(grid_1d, jnp.array([0.3, 0.1]))
    measure = egorax.husimi(state, egorax.covering_lattice(state))
    smoothed = egorax.convolve_gaussian(measure, 0.01)
    total, mean, variance = _moments(measure)
    smoothed_total, smoothed_mean, smoothed_variance = _moments(smoothed)
    assert smoothed_total == pytest.approx(total, abs=1e-8)
    assert np.allclose(smoothed_mean, mean, atol=1e-8)
    assert np.allclose(smoothed_variance, variance + 0.01, atol=1e-6)
    particles = measure.as_particles()
    with pytest.raises(ValueError, match="grid-supported"):
        egorax.convolve_gaussian(particles, 0.01)
