import dataclasses
import logging
import math
import warnings
from typing import Optional

import equinox as eqx
import jax
import jax.lax as lax
import jax.numpy as jnp
import numpy as np
from jaxtyping import Array, ArrayLike, Complex, Float

from ._custom_types import Branches, PhasePoint, Symbol
from ._grid import PhaseSpaceGrid
from ._measure import CenterLattice, PhaseSpaceMeasure
from ._solution import EgoraxError, RESULTS
from ._state import (
    check_boundary,
    coherent_state,
    coherent_wavefunction,
    gaussian_mixture_atoms,
    QuantumState,
    translate_wavefunction,
)


logger = logging.getLogger(__name__)


class OperatorMatrix(eqx.Module):
    """A dense operator acting on wavefunction samples of a `D = 1` grid.

    **Attributes:**

    - `grid`: the grid.
    - `entries`: the `(n_x, n_x)` matrix. `(A ψ)_j = Σ_l entries[j, l] ψ_l`.
    - `hermitian`: whether the operator is Hermitian. Checked on construction, to
        `1e-10` in the largest entry of `A − A†`.
    """

    grid: PhaseSpaceGrid
    entries: Complex[Array, "n n"]
    hermitian: bool = eqx.field(static=True, default=False)

    def __check_init__(self):
        n = self.grid.n_x
        if self.entries.shape != (n, n):
            raise ValueError(
                f"Operator matrix has shape {self.entries.shape}, expected {(n, n)}."
            )
        if self.hermitian and not isinstance(self.entries, jax.core.Tracer):
            asymmetry = float(jnp.max(jnp.abs(self.entries - self.entries.conj().T)))
            if asymmetry > 1e-10:
                raise ValueError(
                    f"Operator flagged Hermitian, but max |A - A^†| = {asymmetry:.2e}."
                )

    def apply(self, psis: Branches) -> Branches:
        """Applies the operator to a single wavefunction or a batch of them."""
        return jnp.einsum("jl,...l->...j", self.entries, psis)

    def adjoint(self) -> "OperatorMatrix":
        return OperatorMatrix(self.grid, self.entries.conj().T, self.hermitian)

    def __matmul__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        return OperatorMatrix(self.grid, self.entries @ other.entries)

    def __sub__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        return OperatorMatrix(
            self.grid,
            self.entries - other.entries,
            self.hermitian and other.hermitian,
        )

    def __add__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        return OperatorMatrix(
            self.grid,
            self.entries + other.entries,
            self.hermitian and other.hermitian,
        )


def identity_operator(grid: PhaseSpaceGrid) -> OperatorMatrix:
    _check_dense(grid)
    return OperatorMatrix(grid, jnp.eye(grid.n_x, dtype=complex), True)


def expectation(operator: OperatorMatrix, state: QuantumState) -> float:
    """`tr[A ρ]` for Hermitian `A`."""
    values = jnp.einsum(
        "bj,bj->b", state.psis.conj(), operator.apply(state.psis)
    ) * state.grid.cell_volume
    return float(jnp.real(jnp.sum(state.weights * values)))


def _check_dense(grid: PhaseSpaceGrid) -> None:
    if grid.dim != 1:
        raise ValueError("Dense operators are only available for D=1.")
    if grid.n_x > 1024:
        raise ValueError(f"Dense operators need n_x <= 1024, got {grid.n_x}.")


#
# Quantisations
#


def weyl_quantize(symbol: Symbol, grid: PhaseSpaceGrid) -> OperatorMatrix:
    """The Weyl quantisation `Op_ℏ(A)` of a real symbol as a dense matrix.

    The kernel `(2πℏ)^{-1} ∫ e^{ip(x−y)/ℏ} A((x+y)/2, p) dp` is discretised on the
    grid: midpoints `(x_j + x_l)/2` lie on the half-step lattice, and the momentum
    integral becomes a discrete Fourier transform over the grid's dual momenta in
    the variable `j − l`. `Op_ℏ(1)` is the identity and `Op_ℏ(x)` is diagonal.

    **Arguments:**

    - `symbol`: a real function of a phase-space point `(x, p)`.
    - `grid`: a `D = 1` grid with `n_x <= 1024`.

    **Returns:**

    A Hermitian [`egorax.OperatorMatrix`][].

    **Raises:**

    `ValueError` if the symbol has non-finite values on the lattice.
    """
    _check_dense(grid)
    n = grid.n_x
    half_x = grid.x_min[0] + 0.5 * grid.dx[0] * jnp.arange(2 * n - 1)
    p = grid.p_axis()
    mesh = jnp.stack(jnp.meshgrid(half_x, p, indexing="ij"), axis=-1)
    values = jax.vmap(jax.vmap(symbol))(mesh)
    if not bool(jnp.all(jnp.isfinite(values))):
        raise ValueError("Symbol has non-finite values on the Weyl lattice.")
    kernel = n * jnp.fft.ifft(jnp.real(values).astype(complex), axis=1)
    j = jnp.arange(n)[:, None]
    l = jnp.arange(n)[None, :]
    entries = kernel[j + l, (j - l) % n] / n
    # Exact Hermitian symmetrisation; the asymmetry is floating point roundoff only.
    entries = 0.5 * (entries + entries.conj().T)
    return OperatorMatrix(grid, entries, True)


def coherent_matrix(grid: PhaseSpaceGrid, centers: Float[Array, "atoms 2"]):
    """Coherent-state samples `⟨x_j|α_i⟩` as rows, for `D = 1`."""
    x = grid.x_axis()[None, :]
    alpha_x = centers[:, :1]
    alpha_p = centers[:, 1:]
    hbar = grid.hbar
    phase = alpha_p * (x - alpha_x / 2) / hbar
    gauss = (x - alpha_x) ** 2 / (2 * hbar)
    return (math.pi * hbar) ** (-0.25) * jnp.exp(1j * phase - gauss)


def wavepacket_quantize(
    f: Symbol, grid: PhaseSpaceGrid, lattice: CenterLattice
) -> OperatorMatrix:
    """The wavepacket (anti-Wick) quantisation
    `Op^w(f) = (2πℏ)^{-1} ∫ f(α) |α⟩⟨α| dα`, by quadrature over `lattice`.

    Positive semidefinite whenever `f ≥ 0`. `Op^w(|α_a − c|²)` equals
    `(α̂_a − c)² + (ℏ/2) Id` in this normalisation.

    **Arguments:**

    - `f`: a real function of a phase-space point.
    - `grid`: a `D = 1` grid.
    - `lattice`: quadrature centres, spacing at most `√ℏ / 2`.

    **Returns:**

    A Hermitian [`egorax.OperatorMatrix`][].
    """
    _check_dense(grid)
    lattice.check_resolution(grid.hbar)
    centers = lattice.centers()
    values = jax.vmap(f)(centers)
    if not bool(jnp.all(jnp.isfinite(values))):
        raise ValueError("Symbol has non-finite values on the centre lattice.")
    weights = jnp.real(values) * lattice.cell_volume / (2 * math.pi * grid.hbar)
    rows = coherent_matrix(grid, centers)
    entries = jnp.einsum("i,ij,il->jl", weights, rows, rows.conj()) * grid.dx[0]
    entries = 0.5 * (entries + entries.conj().T)
    return OperatorMatrix(grid, entries, True)


def translation_operator(grid: PhaseSpaceGrid, beta: ArrayLike) -> OperatorMatrix:
    """The dense matrix of `τ_β`, built by translating each grid basis vector."""
    _check_dense(grid)
    beta = grid.phase_point(beta)
    basis = jnp.eye(grid.n_x, dtype=complex)
    columns = jax.vmap(lambda e: translate_wavefunction(grid, e, beta))(basis)
    return OperatorMatrix(grid, columns.T)


#
# Phase-space functions
#


def _wigner_branch(grid: PhaseSpaceGrid, psi):
    n = grid.n_x
    dim = grid.dim
    padded = jnp.pad(psi, n)
    j = jnp.arange(n)[:, None]
    s = jnp.round(jnp.fft.fftfreq(n) * n).astype(int)[None, :]
    plus = n + j + s
    minus = n + j - s
    if dim == 1:
        correlation = padded[plus].conj() * padded[minus]
    else:
        correlation = (
            padded[plus[:, None, :, None], plus[None, :, None, :]].conj()
            * padded[minus[:, None, :, None], minus[None, :, None, :]]
        )
    s_axes = tuple(range(dim, 2 * dim))
    values = jnp.real(jnp.fft.ifftn(correlation, axes=s_axes)) * n**dim
    values = values * grid.cell_volume / (math.pi * grid.hbar) ** dim
    return jnp.fft.fftshift(values, axes=s_axes)


def wigner_lattice(grid: PhaseSpaceGrid) -> CenterLattice:
    """The lattice the discrete Wigner function lives on: the position grid times the
    momenta `πℏk/L`, `k = −n_x/2, ..., n_x/2 − 1`.
    """
    dp = tuple(math.pi * grid.hbar / length for length in grid.length)
    return CenterLattice(
        origin=tuple(grid.x_min) + tuple(-0.5 * grid.n_x * h for h in dp),
        spacing=tuple(grid.dx) + dp,
        shape=(grid.n_x,) * (2 * grid.dim),
    )


def wigner(state: QuantumState) -> PhaseSpaceMeasure:
    """The Wigner function `W_ρ(x, p) = (πℏ)^{-D} ∫ ⟨x+y|ρ|x−y⟩ e^{2ip·y/ℏ} dy`.

    Computed per branch by a zero-padded FFT over `y`, on
    [`egorax.wigner_lattice`][]. The Wigner momentum range is half of the grid's
    Nyquist range. Sums to one, but may be negative.

    **Arguments:**

    - `state`: the state. For `D = 2` the grid must have `n_x <= 64`.

    **Returns:**

    A signed grid-supported [`egorax.PhaseSpaceMeasure`][].

    **Raises:**

    [`egorax.EgoraxError`][] if the state reaches the boundary band.
    """
    grid = state.grid
    if grid.n_x ** (2 * grid.dim) > 2**24:
        raise ValueError(
            f"The Wigner lattice would have {grid.n_x ** (2 * grid.dim)} points; "
            "reduce n_x."
        )
    check_boundary(state, context="wigner")

    def body(carry, branch):
        weight, psi = branch
        return carry + weight * _wigner_branch(grid, psi), None

    init = jnp.zeros((grid.n_x,) * (2 * grid.dim))
    values, _ = lax.scan(body, init, (state.weights, state.psis))
    lattice = wigner_lattice(grid)
    return PhaseSpaceMeasure(
        lattice.centers(),
        values.reshape(-1) * lattice.cell_volume,
        lattice,
        signed=True,
    )


def _husimi_values(state: QuantumState, lattice: CenterLattice):
    grid = state.grid
    dim = grid.dim
    hbar = grid.hbar
    gauss_factors = []
    wave_factors = []
    phases = []
    for a in range(dim):
        x = grid.x_axis(a)
        alpha_x = lattice.axis(a)
        alpha_p = lattice.axis(dim + a)
        offsets = x[None, :] - alpha_x[:, None]
        gauss_factors.append(jnp.exp(-(offsets**2) / (2 * hbar)))
        wave_factors.append(jnp.exp(-1j * alpha_p[:, None] * x[None, :] / hbar))
        phases.append(jnp.exp(0.5j * alpha_p[None, :] * alpha_x[:, None] / hbar))
    norm = (math.pi * hbar) ** (-dim / 4) * grid.cell_volume

    if dim == 1:

        def overlap(psi):
            out = jnp.einsum("ix,kx,x->ik", gauss_factors[0], wave_factors[0], psi)
            return norm * out * phases[0]

    else:

        def overlap(psi):
            out = jnp.einsum(
                "ax,by,cx,dy,xy->abcd",
                gauss_factors[0],
                gauss_factors[1],
                wave_factors[0],
                wave_factors[1],
                psi,
                optimize="optimal",
            )
            return (
                norm * out * phases[0][:, None, :, None] * phases[1][None, :, None, :]
            )

    def body(carry, branch):
        weight, psi = branch
        return carry + weight * jnp.abs(overlap(psi)) ** 2, None

    values, _ = lax.scan(body, jnp.zeros(lattice.shape), (state.weights, state.psis))
    return values / (2 * math.pi * hbar) ** dim


def husimi(
    state: QuantumState, lattice: CenterLattice, coverage_tol: float = 1e-6
) -> PhaseSpaceMeasure:
    """The Husimi function `H_ρ(α) = (2πℏ)^{-D} ⟨α|ρ|α⟩`, sampled on a lattice of
    centres.

    Computed directly from the coherent-state overlaps of each branch, so it is
    nonnegative by construction.

    **Arguments:**

    - `state`: the state.
    - `lattice`: the centres. Spacing at most `√ℏ / 2`.
    - `coverage_tol`: the largest allowed deficit of the quadrature total mass.

    **Returns:**

    A nonnegative grid-supported [`egorax.PhaseSpaceMeasure`][] whose `dropped_mass`
    is the mass that falls outside of the lattice.

    **Raises:**

    `ValueError` if the lattice is too coarse, and [`egorax.EgoraxError`][] with
    `RESULTS.coverage_violation` if the lattice misses more than `coverage_tol` of the
    mass.
    """
    grid = state.grid
    if lattice.dim != grid.dim:
        raise ValueError("Lattice and grid dimensions differ.")
    lattice.check_resolution(grid.hbar)
    values = _husimi_values(state, lattice)
    masses = values.reshape(-1) * lattice.cell_volume
    total = float(jnp.sum(masses))
    if abs(total - 1) > coverage_tol:
        raise EgoraxError(
            RESULTS.coverage_violation,
            f"Husimi quadrature mass is {total:.8f} on a lattice of shape "
            f"{lattice.shape} starting at {lattice.origin}.",
        )
    return PhaseSpaceMeasure(
        lattice.centers(), masses, lattice, dropped_mass=max(0.0, 1 - total)
    )


def _marginal_interval(axis, density, tail):
    cumulative = jnp.cumsum(density) / jnp.sum(density)
    lo = axis[jnp.searchsorted(cumulative, tail / 2)]
    top = jnp.searchsorted(cumulative, 1 - tail / 2)
    hi = axis[jnp.minimum(top, axis.shape[0] - 1)]
    return float(lo), float(hi)


def covering_lattice(
    state: QuantumState,
    spacing: Optional[float] = None,
    tail: float = 1e-10,
    offset: Optional[ArrayLike] = None,
) -> CenterLattice:
    """A centre lattice covering the phase-space support of `state`.

    Each axis spans the `tail / 2` and `1 − tail / 2` quantiles of the position (or
    momentum) marginal, widened by the Husimi smoothing length `√(ℏ ln(1/tail))`.
    Lattice points sit at `offset + h ℤ`, so that a state translated by `v` and
    covered with `offset = v` is sampled on exactly the translated lattice.

    **Arguments:**

    - `state`: the state.
    - `spacing`: the lattice spacing `h`. Defaults to `√ℏ / 4`.
    - `tail`: the mass allowed outside of the lattice.
    - `offset`: anchor of the lattice points, length `2D`. Defaults to the origin.

    **Returns:**

    A [`egorax.CenterLattice`][].
    """
    grid = state.grid
    dim = grid.dim
    hbar = grid.hbar
    h = math.sqrt(hbar) / 4 if spacing is None else float(spacing)
    offset = np.zeros(2 * dim) if offset is None else np.asarray(offset, dtype=float)
    pad = math.sqrt(hbar * math.log(1 / tail))
    spatial_axes = tuple(range(1, dim + 1))
    density = jnp.einsum("b,b...->...", state.weights, jnp.abs(state.psis) ** 2)
    psi_hat = jnp.fft.fftn(state.psis, axes=spatial_axes)
    p_density = jnp.einsum("b,b...->...", state.weights, jnp.abs(psi_hat) ** 2)
    origin = []
    shape = []
    for a in range(2 * dim):
        axis_index = a % dim
        others = tuple(i for i in range(dim) if i != axis_index)
        if a < dim:
            axis = grid.x_axis(axis_index)
            marginal = jnp.sum(density, axis=others)
        else:
            axis = jnp.fft.fftshift(grid.p_axis(axis_index))
            marginal = jnp.fft.fftshift(jnp.sum(p_density, axis=others))
        lo, hi = _marginal_interval(axis, marginal, tail)
        lo -= pad
        hi += pad
        start = math.floor((lo - offset[a]) / h) * h + offset[a]
        origin.append(start)
        shape.append(int(math.ceil((hi - start) / h)) + 1)
    return CenterLattice(
        origin=tuple(origin), spacing=(h,) * (2 * dim), shape=tuple(shape)
    )


def convolve_gaussian(measure: PhaseSpaceMeasure, variance: float) -> PhaseSpaceMeasure:
    """Convolves a grid-supported measure with the centred Gaussian of covariance
    `variance · Id`, spectrally, returning values on the same lattice.
    """
    lattice = measure.lattice
    if lattice is None:
        raise ValueError("Gaussian convolution needs a grid-supported measure.")
    values = measure.density()
    sigma = math.sqrt(variance)
    pads = [int(math.ceil(8 * sigma / h)) for h in lattice.spacing]
    padded = jnp.pad(values, [(k, k) for k in pads])
    transformed = jnp.fft.fftn(padded)
    for a, h in enumerate(lattice.spacing):
        freq = 2 * jnp.pi * jnp.fft.fftfreq(padded.shape[a], h)
        shape = [1] * padded.ndim
        shape[a] = -1
        transformed = transformed * jnp.exp(-0.5 * variance * freq**2).reshape(shape)
    smoothed = jnp.real(jnp.fft.ifftn(transformed))
    smoothed = smoothed[tuple(slice(k, k + n) for k, n in zip(pads, lattice.shape))]
    if not measure.signed:
        smoothed = jnp.maximum(smoothed, 0)
    return PhaseSpaceMeasure(
        lattice.centers(),
        smoothed.reshape(-1) * lattice.cell_volume,
        lattice,
        signed=measure.signed,
        dropped_mass=measure.dropped_mass,
    )


#
# Noising channel
#


def _prune_branches(masses, cap, tol=1e-9):
    order = jnp.argsort(masses)
    cumulative = jnp.cumsum(masses[order])
    n_dropped = int(jnp.searchsorted(cumulative, tol, side="right"))
    keep = jnp.sort(order[n_dropped:])
    if keep.shape[0] > cap:
        raise EgoraxError(
            RESULTS.branch_cap_exceeded,
            f"The mixture needs {keep.shape[0]} branches; the cap is {cap}.",
        )
    return keep


def noising_channel(
    state: QuantumState,
    spacing: Optional[float] = None,
    tail: float = 1e-10,
    max_branches: int = 4096,
) -> QuantumState:
    """The noising channel `N[ρ] = ∫ H_ρ(α) |α⟩⟨α| dα`, a mixture of coherent states
    weighted by the Husimi function of `ρ`.

    **Arguments:**

    - `state`: the state `ρ`.
    - `spacing`: the quadrature lattice spacing. Defaults to `√ℏ / 2`.
    - `tail`: passed to [`egorax.covering_lattice`][].
    - `max_branches`: the branch cap. Lattice atoms carrying in total at most `1e-9`
        of the mass are dropped before the cap is applied.

    **Returns:**

    The mixture state, with trace one.

    **Raises:**

    [`egorax.EgoraxError`][] on coverage violations or if the cap is exceeded.
    """
    grid = state.grid
    h = math.sqrt(grid.hbar) / 2 if spacing is None else spacing
    lattice = covering_lattice(state, spacing=h, tail=tail)
    measure = husimi(state, lattice)
    keep = _prune_branches(measure.masses, max_branches)
    centers = measure.locations[keep]
    weights = measure.masses[keep]
    weights = weights / jnp.sum(weights)
    psis = jax.vmap(lambda a: coherent_wavefunction(grid, a))(centers)
    logger.debug("Noising channel with %d branches.", centers.shape[0])
    return QuantumState(grid, weights, psis)


def translation_mixture(
    state: QuantumState,
    variance: Optional[float] = None,
    order: int = 5,
    max_branches: int = 4096,
) -> QuantumState:
    """`∫ γ(β) τ_β ρ τ_β† dβ` for the centred Gaussian `γ` of covariance
    `variance · Id` on phase space, by Gauss–Hermite quadrature in `β`.

    With `variance = ℏ` (the default) this is the noising channel written as a
    mixture of phase-space translations.
    """
    grid = state.grid
    variance = grid.hbar if variance is None else variance
    shifts, shift_weights = gaussian_mixture_atoms(
        jnp.zeros(2 * grid.dim), variance, order
    )
    n_total = shifts.shape[0] * state.n_branches
    if n_total > max_branches:
        raise EgoraxError(
            RESULTS.branch_cap_exceeded,
            f"The translation mixture needs {n_total} branches; the cap is "
            f"{max_branches}.",
        )

    def translate_all(beta):
        return jax.vmap(lambda psi: translate_wavefunction(grid, psi, beta))(
            state.psis
        )

    psis = jax.vmap(translate_all)(shifts).reshape((n_total,) + grid.shape)
    weights = (shift_weights[:, None] * state.weights[None, :]).reshape(-1)
    return check_boundary(
        QuantumState(grid, weights, psis), context="translation mixture"
    )


@dataclasses.dataclass(frozen=True)
class KernelConventions:
    """Gaussian widths measured from the defining integrals.

    **Attributes:**

    - `hbar`: the semiclassical parameter they were measured at.
    - `wigner_variance`: the per-coordinate variance of the Wigner function of `|0⟩`.
    - `husimi_variance`: the per-coordinate variance of the Husimi function of `|0⟩`.
    - `husimi_smoothing`: the variance `s` with `H_ρ = W_ρ ∗ γ_s`.
    - `noising_variance`: the variance `s` with `H_{N[ρ]} = H_ρ ∗ γ_s` (equivalently
        `W_{N[ρ]} = W_ρ ∗ γ_s`).
    - `matches_displayed`: whether the smoothing and noising variances agree with
        `ℏ` and `2ℏ` respectively, to 1%.
    """

    hbar: float
    wigner_variance: float
    husimi_variance: float
    husimi_smoothing: float
    noising_variance: float
    matches_displayed: bool

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _variance(measure: PhaseSpaceMeasure) -> float:
    mean = measure.mean()
    centred = measure.locations - mean
    return float(
        jnp.sum(measure.masses[:, None] * centred**2) / jnp.sum(measure.masses)
    ) / measure.locations.shape[1]


def resolve_conventions(grid: PhaseSpaceGrid) -> KernelConventions:
    """Measures the Gaussian-kernel constants of the transforms on `grid`.

    The vacuum `|0⟩` is pushed through the Wigner and Husimi transforms and the
    noising channel, and the variances of the results are read off. A warning is
    emitted if they disagree with the displayed constants `ℏ` (Husimi smoothing) and
    `2ℏ` (noising); all downstream identity checks use the measured values.
    """
    hbar = grid.hbar
    vacuum = coherent_state(grid, jnp.zeros(2 * grid.dim))
    wigner_variance = _variance(wigner(vacuum))
    husimi_variance = _variance(husimi(vacuum, covering_lattice(vacuum)))
    noised = noising_channel(vacuum)
    noised_variance = _variance(husimi(noised, covering_lattice(noised)))
    smoothing = husimi_variance - wigner_variance
    noising = noised_variance - husimi_variance
    matches = abs(smoothing / hbar - 1) < 1e-2 and abs(noising / (2 * hbar) - 1) < 1e-2
    if not matches:
        warnings.warn(
            f"Measured Gaussian kernels differ from the displayed ones at hbar={hbar}: "
            f"Husimi smoothing variance {smoothing:.6g} (displayed {hbar}), noising "
            f"variance {noising:.6g} (displayed {2 * hbar}). Using measured values.",
            stacklevel=2,
        )
    return KernelConventions(
        hbar=hbar,
        wigner_variance=wigner_variance,
        husimi_variance=husimi_variance,
        husimi_smoothing=smoothing,
        noising_variance=noising,
        matches_displayed=matches,
    )


#
# Mollification
#


class MollifiedSymbol(eqx.Module):
    """`(G ∗ γ)(α) = E[G(α − Z)]`, `Z ~ N(0, variance · Id)`, by tensor Gauss–Hermite
    quadrature. Exact for polynomials of degree below `2 * order`.
    """

    symbol: Symbol = eqx.field(static=True)
    nodes: Float[Array, "nodes phase"]
    weights: Float[Array, " nodes"]

    def __call__(self, alpha: PhasePoint) -> Float[Array, ""]:
        values = jax.vmap(lambda z: self.symbol(alpha - z))(self.nodes)
        return jnp.sum(self.weights * values)


def mollify_symbol(
    symbol: Symbol,
    grid: PhaseSpaceGrid,
    variance: Optional[float] = None,
    order: int = 16,
) -> MollifiedSymbol:
    """Convolves a phase-space symbol with the Gaussian `γ_ℏ` (covariance `ℏ · Id`
    unless `variance` is given).

    **Arguments:**

    - `symbol`: the function `G`.
    - `grid`: provides `ℏ` and `D`.
    - `variance`: the kernel variance. Defaults to `ℏ`.
    - `order`: Gauss–Hermite nodes per phase-space axis.

    **Returns:**

    A callable [`egorax.MollifiedSymbol`][].
    """
    variance = grid.hbar if variance is None else variance
    nodes, weights = gaussian_mixture_atoms(
        jnp.zeros(2 * grid.dim), variance, order
    )
    return MollifiedSymbol(symbol, nodes, weights)