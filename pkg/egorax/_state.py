import math
from collections.abc import Sequence
from typing import Optional, Union

import equinox as eqx
import jax
import jax.numpy as jnp
import jax.random as jr
import numpy as np
from jaxtyping import Array, ArrayLike, Complex, Float, PRNGKeyArray

from ._custom_types import Branches, PhaseCloud, PhasePoint, Wavefunction
from ._grid import PhaseSpaceGrid
from ._measure import PhaseSpaceMeasure
from ._solution import EgoraxError, RESULTS


class QuantumState(eqx.Module):
    """A density operator represented as a low-rank mixture of pure states,
    `ρ = Σ_b w_b |ψ_b⟩⟨ψ_b|`. A pure state is the single-branch case.

    **Attributes:**

    - `grid`: the [`egorax.PhaseSpaceGrid`][] the wavefunctions are sampled on.
    - `weights`: the nonnegative branch weights, summing to one.
    - `psis`: the branch wavefunctions, shape `(branches,) + grid.shape`.
    """

    grid: PhaseSpaceGrid
    weights: Float[Array, " branches"]
    psis: Branches

    def __check_init__(self):
        if self.psis.shape[1:] != self.grid.shape:
            raise ValueError(
                f"Wavefunctions have shape {self.psis.shape[1:]}, but the grid has "
                f"shape {self.grid.shape}."
            )
        if self.weights.shape != self.psis.shape[:1]:
            raise ValueError("Need exactly one weight per branch.")

    @property
    def n_branches(self) -> int:
        return self.psis.shape[0]

    @property
    def is_pure(self) -> bool:
        return self.n_branches == 1

    @property
    def psi(self) -> Wavefunction:
        if not self.is_pure:
            raise ValueError("`psi` is only defined for pure states.")
        return self.psis[0]

    def norms(self) -> Float[Array, " branches"]:
        return branch_norms(self.grid, self.psis)

    def trace(self) -> float:
        return float(jnp.sum(self.weights * self.norms() ** 2))

    def with_psis(self, psis: Branches) -> "QuantumState":
        return QuantumState(self.grid, self.weights, psis)


def branch_norms(grid: PhaseSpaceGrid, psis: Branches) -> Float[Array, " branches"]:
    axes = tuple(range(1, psis.ndim))
    return jnp.sqrt(jnp.sum(jnp.abs(psis) ** 2, axis=axes) * grid.cell_volume)


def make_state(
    grid: PhaseSpaceGrid,
    weights: ArrayLike,
    psis: ArrayLike,
    *,
    normalise: bool = False,
) -> QuantumState:
    """Builds a [`egorax.QuantumState`][] and checks its invariants.

    **Arguments:**

    - `grid`: the grid.
    - `weights`: nonnegative branch weights.
    - `psis`: branch wavefunctions, shape `(branches,) + grid.shape`.
    - `normalise`: if `True`, rescale the weights and wavefunctions first. Otherwise
        the weights must sum to one within `1e-12` and each wavefunction must have
        unit norm within `1e-10`.

    **Returns:**

    The state.
    """
    weights = jnp.asarray(weights, dtype=float).reshape(-1)
    psis = jnp.asarray(psis, dtype=complex)
    if psis.ndim == grid.dim:
        psis = psis[None]
    if bool(jnp.any(weights < 0)):
        raise ValueError("Branch weights must be nonnegative.")
    if normalise:
        psis = psis / branch_norms(grid, psis).reshape((-1,) + (1,) * grid.dim)
        weights = weights / jnp.sum(weights)
    state = QuantumState(grid, weights, psis)
    if abs(float(jnp.sum(weights)) - 1) > 1e-12:
        raise ValueError("Branch weights must sum to one.")
    if bool(jnp.any(jnp.abs(state.norms() - 1) > 1e-10)):
        raise ValueError("Every branch must have unit L2 norm.")
    return state


def pure_state(grid: PhaseSpaceGrid, psi: ArrayLike) -> QuantumState:
    return make_state(grid, jnp.ones(1), psi, normalise=True)


#
# Boundary monitor
#


def boundary_mass(state: QuantumState) -> float:
    """The probability mass within `grid.boundary_band` of the edges of the position
    box, plus the mass within the same distance of the momentum Nyquist limit.
    """
    grid = state.grid
    band = grid.boundary_band
    x = grid.positions()
    p = grid.momenta()
    x_min = jnp.array(grid.x_min)
    x_max = jnp.array(grid.x_max)
    p_max = jnp.array(grid.momentum_limit)
    x_mask = jnp.any((x < x_min + band) | (x > x_max - band), axis=-1)
    p_mask = jnp.any(jnp.abs(p) > p_max - band, axis=-1)
    density = jnp.abs(state.psis) ** 2
    spatial_axes = tuple(range(1, grid.dim + 1))
    x_mass = jnp.sum(jnp.where(x_mask, density, 0), axis=spatial_axes)
    psi_hat = jnp.fft.fftn(state.psis, axes=spatial_axes)
    p_density = jnp.abs(psi_hat) ** 2 / grid.n_x**grid.dim
    p_mass = jnp.sum(jnp.where(p_mask, p_density, 0), axis=spatial_axes)
    mass = (x_mass + p_mass) * grid.cell_volume
    return float(jnp.sum(state.weights * mass))


def check_boundary(
    state: QuantumState, tol: float = 1e-6, context: str = "state"
) -> QuantumState:
    """Raises an [`egorax.EgoraxError`][] carrying `RESULTS.boundary_leak` if the
    boundary monitor sees more than `tol` of the mass.
    """
    mass = boundary_mass(state)
    if mass > tol:
        raise EgoraxError(
            RESULTS.boundary_leak,
            f"{context}: boundary mass {mass:.3e} exceeds {tol:.1e} "
            f"(hbar={state.grid.hbar}, box={state.grid.x_min}..{state.grid.x_max}, "
            f"n_x={state.grid.n_x}).",
        )
    return state


#
# Coherent states and translations
#


def coherent_wavefunction(grid: PhaseSpaceGrid, alpha: PhasePoint) -> Wavefunction:
    """⟨x|α⟩ = (πℏ)^{-D/4} exp(iα_p·(x − α_x/2)/ℏ) exp(−|x − α_x|²/(2ℏ)), sampled on
    the grid. Unit norm on ℝ^D.
    """
    hbar = grid.hbar
    dim = grid.dim
    x = grid.positions()
    alpha_x = alpha[:dim]
    alpha_p = alpha[dim:]
    phase = jnp.sum(alpha_p * (x - alpha_x / 2), axis=-1) / hbar
    gauss = jnp.sum((x - alpha_x) ** 2, axis=-1) / (2 * hbar)
    return (math.pi * hbar) ** (-dim / 4) * jnp.exp(1j * phase - gauss)


def _check_margin(grid: PhaseSpaceGrid, alpha: PhasePoint) -> None:
    margin = 5 * math.sqrt(grid.hbar)
    dim = grid.dim
    for a in range(dim):
        centre = float(alpha[a])
        if not grid.x_min[a] + margin <= centre <= grid.x_max[a] - margin:
            raise ValueError(
                f"Coherent-state centre x={centre} is within 5 sqrt(hbar) of the "
                f"box [{grid.x_min[a]}, {grid.x_max[a]}]."
            )
        momentum = abs(float(alpha[dim + a]))
        if momentum > grid.momentum_limit[a] - margin:
            raise ValueError(
                f"Coherent-state momentum p={float(alpha[dim + a])} is within "
                f"5 sqrt(hbar) of the Nyquist limit {grid.momentum_limit[a]}."
            )


def coherent_state(grid: PhaseSpaceGrid, alpha: ArrayLike) -> QuantumState:
    """The isotropic coherent state |α⟩.

    **Arguments:**

    - `grid`: the grid.
    - `alpha`: the centre, ordered as positions then momenta.

    **Returns:**

    A pure [`egorax.QuantumState`][] of unit norm.

    **Raises:**

    `ValueError` if the centre is within `5 √ℏ` of the box edges (or of the momentum
    Nyquist limit), where the Gaussian tail would be cut off.
    """
    alpha = grid.phase_point(alpha)
    _check_margin(grid, alpha)
    psi = coherent_wavefunction(grid, alpha)
    return QuantumState(grid, jnp.ones(1), psi[None])


def translate_wavefunction(
    grid: PhaseSpaceGrid, psi: Wavefunction, alpha: PhasePoint
) -> Wavefunction:
    # τ_α ψ(x) = exp(iα_p·(x − α_x/2)/ℏ) ψ(x − α_x), with the shift applied as a
    # Fourier phase so that off-grid α_x is exact for band-limited ψ.
    dim = grid.dim
    alpha_x = alpha[:dim]
    alpha_p = alpha[dim:]
    axes = tuple(range(psi.ndim - dim, psi.ndim))
    shift = jnp.exp(-1j * jnp.sum(grid.momenta() * alpha_x, axis=-1) / grid.hbar)
    shifted = jnp.fft.ifftn(jnp.fft.fftn(psi, axes=axes) * shift, axes=axes)
    x = grid.positions()
    phase = jnp.exp(1j * jnp.sum(alpha_p * (x - alpha_x / 2), axis=-1) / grid.hbar)
    return phase * shifted


def translate(state: QuantumState, alpha: ArrayLike) -> QuantumState:
    """Applies the phase-space translation τ_α = exp(i(α_p·x̂ − α_x·p̂)/ℏ) to every
    branch.

    **Arguments:**

    - `state`: the state to translate.
    - `alpha`: the translation, ordered as positions then momenta.

    **Returns:**

    The translated state, with the same weights.

    **Raises:**

    [`egorax.EgoraxError`][] if the translated state reaches the boundary band.
    """
    grid = state.grid
    alpha = grid.phase_point(alpha)
    if not bool(jnp.any(alpha != 0)):
        return state
    psis = jax.vmap(lambda psi: translate_wavefunction(grid, psi, alpha))(state.psis)
    return check_boundary(state.with_psis(psis), context="translate")


#
# Mixtures
#


def gaussian_mixture_atoms(
    mean: ArrayLike, variance: Union[float, Sequence[float]], order: int = 3
) -> tuple[PhaseCloud, Float[Array, " atoms"]]:
    """Tensor Gauss–Hermite quadrature of a Gaussian density on phase space.

    **Arguments:**

    - `mean`: the mean, length `2D`.
    - `variance`: the variance of each phase-space coordinate (scalar or per axis).
    - `order`: number of nodes per axis.

    **Returns:**

    A tuple `(locations, weights)` with `order ** (2D)` atoms. The weights sum to one.
    """
    mean = np.asarray(mean, dtype=float).reshape(-1)
    n_axes = mean.shape[0]
    variance = np.broadcast_to(np.asarray(variance, dtype=float), (n_axes,))
    nodes, node_weights = np.polynomial.hermite.hermgauss(order)
    node_weights = node_weights / math.sqrt(math.pi)
    axes = [mean[a] + math.sqrt(2 * variance[a]) * nodes for a in range(n_axes)]
    locations = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    locations = locations.reshape(-1, n_axes)
    weights = np.ones(())
    for _ in range(n_axes):
        weights = np.multiply.outer(weights, node_weights)
    return jnp.asarray(locations), jnp.asarray(weights.reshape(-1))


def mix_coherent(
    grid: PhaseSpaceGrid,
    density: Union[PhaseSpaceMeasure, Sequence[tuple[ArrayLike, float]]],
    max_branches: int = 4096,
) -> QuantumState:
    """The coherent-state mixture ρ = Σ_i w_i |α_i⟩⟨α_i|, a quadrature of
    ∫ p(α) |α⟩⟨α| dα.

    **Arguments:**

    - `grid`: the grid.
    - `density`: either a nonnegative [`egorax.PhaseSpaceMeasure`][] (whose masses are
        the quadrature weights) or a sequence of `(alpha, weight)` atoms.
    - `max_branches`: the largest number of branches allowed.

    **Returns:**

    The mixture state. Atoms of zero weight are dropped.

    **Raises:**

    `ValueError` if the weights are negative, do not sum to one within `1e-6`, or if
    there are more than `max_branches` atoms.
    """
    if isinstance(density, PhaseSpaceMeasure):
        if density.signed:
            raise ValueError("Cannot mix coherent states with a signed density.")
        locations = density.locations
        weights = density.masses
    else:
        atoms = list(density)
        if len(atoms) == 0:
            raise ValueError("Need at least one atom.")
        locations = jnp.stack([grid.phase_point(a) for a, _ in atoms])
        weights = jnp.array([float(w) for _, w in atoms])
    if bool(jnp.any(weights < 0)):
        raise ValueError("Mixture weights must be nonnegative.")
    total = float(jnp.sum(weights))
    if abs(total - 1) > 1e-6:
        raise ValueError(f"Mixture weights sum to {total}, not one.")
    keep = np.asarray(weights) > 0
    locations = locations[keep]
    weights = weights[keep] / jnp.sum(weights[keep])
    if locations.shape[0] > max_branches:
        raise ValueError(
            f"{locations.shape[0]} atoms requested, but at most {max_branches} "
            "branches are allowed."
        )
    for alpha in locations:
        _check_margin(grid, alpha)
    psis = jax.vmap(lambda a: coherent_wavefunction(grid, a))(locations)
    return QuantumState(grid, weights, psis)


#
# Further test states
#


def cat_state(grid: PhaseSpaceGrid, alpha: ArrayLike) -> QuantumState:
    """(|α⟩ + |−α⟩) / norm."""
    alpha = grid.phase_point(alpha)
    _check_margin(grid, alpha)
    _check_margin(grid, -alpha)
    psi = coherent_wavefunction(grid, alpha) + coherent_wavefunction(grid, -alpha)
    return pure_state(grid, psi)


def squeezed_state(
    grid: PhaseSpaceGrid, alpha: ArrayLike, width: float
) -> QuantumState:
    """A Gaussian wavepacket centred at α with position standard deviation
    `width / √2`. `width = √ℏ` recovers the coherent state.
    """
    alpha = grid.phase_point(alpha)
    _check_margin(grid, alpha)
    dim = grid.dim
    x = grid.positions()
    phase = jnp.sum(alpha[dim:] * (x - alpha[:dim] / 2), axis=-1) / grid.hbar
    gauss = jnp.sum((x - alpha[:dim]) ** 2, axis=-1) / (2 * width**2)
    return pure_state(grid, jnp.exp(1j * phase - gauss))


def hermite_state(grid: PhaseSpaceGrid, alpha: ArrayLike, n: int) -> QuantumState:
    """τ_α applied to the `n`-th eigenfunction of the unit-frequency oscillator (along
    the first axis; the ground state along any other).
    """
    alpha = grid.phase_point(alpha)
    _check_margin(grid, alpha)
    x = np.asarray(grid.positions())
    scaled = x / math.sqrt(grid.hbar)
    coefficients = np.zeros(n + 1)
    coefficients[n] = 1
    profile = np.polynomial.hermite.hermval(scaled[..., 0], coefficients)
    psi = profile * np.exp(-np.sum(scaled**2, axis=-1) / 2)
    state = pure_state(grid, jnp.asarray(psi, dtype=complex))
    return translate(state, alpha)


def random_low_rank_state(
    grid: PhaseSpaceGrid,
    key: PRNGKeyArray,
    rank: int = 2,
    centre: Optional[ArrayLike] = None,
    spread: float = 1.0,
) -> QuantumState:
    """A seeded random mixed state. Each of its `rank` branches is a Haar-random
    combination of up to eight coherent states and up to two Hermite-excited states,
    with centres drawn within `spread` of `centre`.
    """
    if not 1 <= rank <= 8:
        raise ValueError(f"`rank` must be between 1 and 8, got {rank}.")
    dim = grid.dim
    centre = jnp.zeros(2 * dim) if centre is None else grid.phase_point(centre)
    weight_key, *branch_keys = jr.split(key, rank + 1)
    weights = jr.uniform(weight_key, (rank,), minval=0.2, maxval=1.0)
    psis = []
    for branch_key in branch_keys:
        count_key, centre_key, coefficient_key, level_key = jr.split(branch_key, 4)
        n_coherent, n_excited = (
            int(v) for v in jr.randint(count_key, (2,), 1, jnp.array([9, 3]))
        )
        n_total = n_coherent + n_excited
        centres = centre + spread * jr.uniform(
            centre_key, (n_total, 2 * dim), minval=-1.0, maxval=1.0
        )
        levels = jr.randint(level_key, (n_excited,), 1, 4)
        re, im = jr.normal(coefficient_key, (2, n_total))
        coefficients = (re + 1j * im) / jnp.sqrt(jnp.sum(re**2 + im**2))
        psi = jnp.zeros(grid.shape, dtype=complex)
        for i in range(n_total):
            if i < n_coherent:
                _check_margin(grid, centres[i])
                component = coherent_wavefunction(grid, centres[i])
            else:
                level = int(levels[i - n_coherent])
                component = hermite_state(grid, centres[i], level).psi
            psi = psi + coefficients[i] * component
        psis.append(psi)
    return make_state(grid, weights, jnp.stack(psis), normalise=True)


def expectation_position(state: QuantumState) -> Float[Array, " dim"]:
    """`⟨x̂⟩ = Σ_b w_b ∫ x |ψ_b(x)|² dx`."""
    grid = state.grid
    density = jnp.abs(state.psis) ** 2 * grid.cell_volume
    return jnp.einsum("b,b...,...d->d", state.weights, density, grid.positions())


def expectation_momentum(state: QuantumState) -> Float[Array, " dim"]:
    """`⟨p̂⟩`, from the discrete Fourier transform of each branch."""
    grid = state.grid
    spatial_axes = tuple(range(1, grid.dim + 1))
    psi_hat = jnp.fft.fftn(state.psis, axes=spatial_axes)
    p_density = jnp.abs(psi_hat) ** 2 / jnp.sum(
        jnp.abs(psi_hat) ** 2, axis=spatial_axes, keepdims=True
    )
    return jnp.einsum("b,b...,...d->d", state.weights, p_density, grid.momenta())


def phase_space_mean(state: QuantumState) -> PhasePoint:
    """(⟨x̂⟩, ⟨p̂⟩) of the state."""
    return jnp.concatenate([expectation_position(state), expectation_momentum(state)])


def overlap(grid: PhaseSpaceGrid, phi: Wavefunction, psi: Wavefunction) -> Complex[
    Array, ""
]:
    """⟨φ|ψ⟩ by Riemann quadrature on the grid."""
    return jnp.sum(jnp.conj(phi) * psi) * grid.cell_volume
