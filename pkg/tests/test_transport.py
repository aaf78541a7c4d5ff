import math

import jax.numpy as jnp
import numpy as np
import ot
import pytest

import egorax


def _random_measure(seed, n, shift=0.0):
    rng = np.random.default_rng(seed)
    locations = rng.standard_normal((n, 2)) + shift
    masses = rng.random(n)
    masses = jnp.asarray(masses / masses.sum())
    return egorax.particle_measure(jnp.asarray(locations), masses)


@pytest.mark.parametrize("p", [1.0, 2.0, 3.0])
def test_distance_between_diracs(p):
    alpha = jnp.array([0.0, 1.0])
    beta = jnp.array([3.0, -3.0])
    problem = egorax.TransportProblem(egorax.dirac(alpha), egorax.dirac(beta), p)
    result = egorax.wasserstein(problem)
    assert result.distance == pytest.approx(5.0, rel=1e-10)
    assert result.bound_gap == pytest.approx(0.0, abs=1e-8)


def test_translated_measure_distance():
    mu = _random_measure(0, 30)
    offset = jnp.array([0.3, -0.4])
    result = egorax.wasserstein(egorax.TransportProblem(mu, mu.translated(offset), 2.0))
    assert result.distance == pytest.approx(0.5, rel=1e-8)


def test_wasserstein_to_point():
    measure = egorax.particle_measure(jnp.array([[1.0, 0.0], [-1.0, 0.0]]))
    assert egorax.wasserstein_to_point(measure, jnp.zeros(2)) == pytest.approx(1.0)
    problem = egorax.TransportProblem(measure, egorax.dirac(jnp.zeros(2)))
    assert egorax.wasserstein(problem).distance == pytest.approx(1.0)


def test_exact_and_entropic_agree():
    mu = _random_measure(1, 80)
    nu = _random_measure(2, 60, shift=0.5)
    problem = egorax.TransportProblem(mu, nu, 2.0)
    exact = egorax.wasserstein(problem, solver="exact")
    entropic = egorax.wasserstein(problem, solver="entropic")
    assert exact.solver == "exact"
    assert entropic.solver == "entropic"
    assert entropic.epsilon_final is not None
    assert exact.bound_gap < 1e-6
    # Both are feasible couplings; the entropic one carries a certified lower bound.
    assert entropic.distance >= exact.distance - 1e-8
    assert entropic.lower <= exact.distance + 1e-8


@pytest.mark.parametrize("p", [1.0, 2.0])
@pytest.mark.parametrize("seed", range(8))
def test_entropic_solver_brackets_network_simplex(seed, p):
    rng = np.random.default_rng(100 + seed)
    n, m = rng.integers(10, 60, size=2)
    mu = _random_measure(2 * seed, int(n))
    nu = _random_measure(2 * seed + 1, int(m), shift=rng.uniform(0.0, 1.5))
    x, y = np.asarray(mu.locations), np.asarray(nu.locations)
    cost = ot.dist(x, y, metric="euclidean") ** p
    optimum = ot.emd2(np.asarray(mu.masses), np.asarray(nu.masses), cost) ** (1 / p)
    result = egorax.wasserstein(egorax.TransportProblem(mu, nu, p), solver="entropic")
    assert result.lower - 1e-8 <= optimum <= result.distance + 1e-8
    assert result.distance <= 1.01 * optimum + 1e-8


def test_plan_marginals():
    mu = _random_measure(3, 20)
    nu = _random_measure(4, 25)
    result = egorax.wasserstein(egorax.TransportProblem(mu, nu), return_plan=True)
    rows, cols, masses = result.plan
    row_sums = np.bincount(np.asarray(rows), weights=np.asarray(masses), minlength=20)
    assert np.allclose(row_sums, np.asarray(mu.masses), atol=1e-9)
    assert "plan" in result.to_dict(include_plan=True)


def test_problem_validation():
    mu = egorax.particle_measure(jnp.array([[0.0, 0.0]]), jnp.array([1.0]))
    heavy = egorax.particle_measure(jnp.array([[0.0, 0.0]]), jnp.array([1.5]))
    with pytest.raises(ValueError, match="Mass mismatch"):
        egorax.TransportProblem(mu, heavy)
    signed = egorax.PhaseSpaceMeasure(mu.locations, mu.masses, signed=True)
    with pytest.raises(ValueError, match="signed"):
        egorax.TransportProblem(signed, mu)
    with pytest.raises(ValueError, match="exponent"):
        egorax.TransportProblem(mu, mu, 0.5)


def test_exact_solver_atom_cap():
    mu = _random_measure(5, 700)
    with pytest.raises(ValueError, match="exact solver"):
        egorax.wasserstein(egorax.TransportProblem(mu, mu), solver="exact")


def test_convexity_bound():
    assert egorax.convexity_bound([1.0, 3.0], [0.5, 0.5]) == pytest.approx(math.sqrt(5))
    with pytest.raises(ValueError):
        egorax.convexity_bound([1.0, 3.0], [0.5, 0.6])


def test_gaussian_smoothing_radius():
    assert egorax.gaussian_smoothing_radius(0.1, 1) == pytest.approx(math.sqrt(0.2))


def test_thin_support_certificate():
    mu = _random_measure(6, 400)
    thinned = egorax.thin_support(mu, max_atoms=50)
    assert thinned.n_atoms <= 50
    assert thinned.total_mass() == pytest.approx(1.0)
    result = egorax.wasserstein(egorax.TransportProblem(mu, thinned))
    assert result.distance <= thinned.certificate + 1e-8


def test_prune_support():
    masses = jnp.array([0.5, 0.5 - 1e-7, 1e-7])
    locations = jnp.array([[0.0, 0.0], [1.0, 0.0], [5.0, 5.0]])
    mu = egorax.particle_measure(locations, masses)
    pruned = egorax.prune_support(mu, 1e-6)
    assert pruned.n_atoms == 2
    assert pruned.dropped_mass == pytest.approx(1e-7)
    assert pruned.total_mass() == pytest.approx(1.0)
    with pytest.raises(ValueError, match="at most"):
        egorax.prune_support(mu, 1e-3)


def test_kantorovich_gap():
    mu = _random_measure(7, 30)
    nu = _random_measure(8, 30, shift=1.0)
    result = egorax.wasserstein(egorax.TransportProblem(mu, nu, 1.0))
    entry = egorax.kantorovich_gap(result, mu, nu, lambda z: jnp.sin(z[0]), 1.0)
    assert entry.passed
    with pytest.raises(ValueError, match="p = 1"):
        egorax.kantorovich_gap(
            egorax.wasserstein(egorax.TransportProblem(mu, nu)), mu, nu, jnp.sum, 1.0
        )
