import math

import jax.numpy as jnp
import pytest

import egorax

from .helpers import random_state


@pytest.fixture
def small_grid():
    return egorax.make_grid(1, 0.1, -5.0, 5.0, 128)


def test_sobolev_norm_of_coherent_state(grid_1d):
    alpha = jnp.array([0.5, -0.5])
    state = egorax.coherent_state(grid_1d, alpha)
    hbar = grid_1d.hbar
    assert egorax.sobolev_norm(state, 0, alpha) == pytest.approx(1.0, abs=1e-10)
    quadratic = egorax.sobolev_norm(state, 1, alpha, form="quadratic")
    assert quadratic == pytest.approx(math.sqrt(hbar), rel=1e-6)
    summed = egorax.sobolev_norm(state, 1, alpha, form="sum")
    assert summed == pytest.approx(math.sqrt(2 * hbar), rel=1e-6)


def test_sobolev_norm_rejects_high_order(grid_1d):
    state = egorax.coherent_state(grid_1d, jnp.zeros(2))
    with pytest.raises(ValueError):
        egorax.sobolev_norm(state, 5, jnp.zeros(2))


def test_canonical_words():
    assert len(egorax.canonical_words(1, 2)) == 3
    assert len(egorax.canonical_words(2, 1)) == 4


def test_centered_position_monomial(grid_1d):
    state = egorax.coherent_state(grid_1d, jnp.zeros(2))
    x_psi = egorax.apply_centered_monomial(state, (0,), jnp.zeros(2))
    expected = grid_1d.x_axis() * state.psi
    assert jnp.allclose(x_psi[0], expected)


@pytest.mark.parametrize("seed", [0, 1])
def test_uncertainty_chain(grid_1d, seed):
    state = random_state(grid_1d, seed=seed)
    report = egorax.uncertainty_chain_check(state, jnp.array([0.1, 0.2]))
    assert report.passed
    assert [e.name for e in report.entries] == ["H1", "H2", "H3", "H4"]


def test_shift_ratio_of_coherent_state(grid_1d):
    alpha = jnp.zeros(2)
    state = egorax.coherent_state(grid_1d, alpha)
    ratio = egorax.sobolev_shift_ratio(state, jnp.array([1.0, 0.5]), alpha, 1)
    assert 0 < ratio <= 1


def test_operator_norm():
    assert egorax.operator_norm(jnp.diag(jnp.array([1.0, 3.0, 2.0]))) == pytest.approx(
        3.0, rel=1e-6
    )
    assert egorax.operator_norm(jnp.zeros((3, 3))) == 0.0


def test_operator_norm_of_identity(small_grid):
    identity = egorax.identity_operator(small_grid)
    assert egorax.operator_norm(identity) == pytest.approx(1.0, rel=1e-8)


def test_windowed_norm_below_full_norm(small_grid):
    position = egorax.weyl_quantize(lambda alpha: alpha[0], small_grid)
    window = egorax.make_window(small_grid)
    windowed = egorax.windowed_operator_norm(position, window)
    full = egorax.operator_norm(position, rtol=1e-6)
    assert windowed <= full + 1e-8
    assert windowed < 2.0
    assert window.rank >= 1


def test_z_norm_of_identity(small_grid):
    identity = egorax.identity_operator(small_grid)
    lattice = egorax.make_lattice((-1.0, -1.0), 0.5, (5, 5))
    assert egorax.z_norm(identity, 0, lattice) == pytest.approx(1.0, abs=1e-8)
    assert egorax.z_norm(identity, 1, lattice, form="quadratic") == pytest.approx(
        math.sqrt(small_grid.hbar), rel=1e-6
    )


def test_offdiagonal_decay_of_identity(small_grid):
    identity = egorax.identity_operator(small_grid)
    lattice = egorax.make_lattice((-1.0, -1.0), 0.5, (5, 5))
    pairs = egorax.sample_pairs(lattice, 6, min_separation=0.5)
    report = egorax.offdiagonal_decay_check(identity, 1, pairs, lattice)
    assert len(report.entries) == 7
    assert report.entries[-1].name == "max_ratio"
    # |<α|β>| = exp(−|α − β|²/(4ℏ)).
    first = report.entries[0]
    distance = math.dist(first.inputs["alpha"], first.inputs["beta"])
    expected = math.exp(-(distance**2) / (4 * small_grid.hbar))
    assert first.inputs["element"] == pytest.approx(expected, rel=1e-6)
