import itertools
import logging
import math
from collections.abc import Sequence
from typing import Optional, Union

import equinox as eqx
import jax
import jax.lax as lax
import jax.numpy as jnp
import numpy as np
from jaxtyping import Array, ArrayLike, Complex, Float

from ._custom_types import Branches
from ._grid import PhaseSpaceGrid
from ._measure import CenterLattice
from ._report import CheckEntry, CheckReport
from ._solution import EgoraxError, RESULTS
from ._state import check_boundary, QuantumState, translate
from ._transforms import coherent_matrix, OperatorMatrix, weyl_quantize


logger = logging.getLogger(__name__)

_MAX_DEGREE = 4


class MonomialIndex(eqx.Module):
    """A word `m = (m_1, ..., m_k)` over the phase-space axes `0, ..., 2D − 1`,
    specifying the monomial `(α̂ − α)_m = (α̂_{m_1} − α_{m_1}) ⋯ (α̂_{m_k} − α_{m_k})`.

    Axes `0, ..., D − 1` are positions and `D, ..., 2D − 1` momenta. The rightmost
    factor acts first.
    """

    word: tuple[int, ...] = eqx.field(static=True)
    dim: int = eqx.field(static=True)

    def __check_init__(self):
        if len(self.word) > _MAX_DEGREE:
            raise ValueError(
                f"Monomials of degree above {_MAX_DEGREE} are not supported."
            )
        if any(not 0 <= m < 2 * self.dim for m in self.word):
            raise ValueError(
                f"Word {self.word} has entries outside of 0..{2 * self.dim - 1}."
            )

    @property
    def degree(self) -> int:
        return len(self.word)

    def canonical(self) -> "MonomialIndex":
        """All position factors before all momentum factors."""
        return MonomialIndex(tuple(sorted(self.word)), self.dim)


def canonical_words(dim: int, k: int) -> list[MonomialIndex]:
    """One canonical word per multi-index `|J| = k`."""
    return [
        MonomialIndex(word, dim)
        for word in itertools.combinations_with_replacement(range(2 * dim), k)
    ]


def _apply_word(
    grid: PhaseSpaceGrid, psi: Complex[Array, "..."], word: tuple[int, ...], alpha
):
    dim = grid.dim
    x = grid.positions()
    p = grid.momenta()
    for m in reversed(word):
        if m < dim:
            psi = (x[..., m] - alpha[m]) * psi
        else:
            psi_hat = jnp.fft.fftn(psi)
            psi = jnp.fft.ifftn((p[..., m - dim] - alpha[m]) * psi_hat)
    return psi


def apply_centered_monomial(
    state: QuantumState, word: Union[MonomialIndex, Sequence[int]], alpha: ArrayLike
) -> Branches:
    """Applies `(α̂ − α)_m` to every branch of `state`.

    Position factors multiply by `x_a − α_a`; momentum factors are spectral
    derivatives `−iℏ∂_a − α_{D+a}`.

    **Arguments:**

    - `state`: the state, which must pass the boundary monitor.
    - `word`: a [`egorax.MonomialIndex`][] or a sequence of 0-based axes, degree at
        most 4.
    - `alpha`: the centre.

    **Returns:**

    The branch arrays `(α̂ − α)_m ψ_b`, stacked.
    """
    grid = state.grid
    if not isinstance(word, MonomialIndex):
        word = MonomialIndex(tuple(int(m) for m in word), grid.dim)
    alpha = grid.phase_point(alpha)
    check_boundary(state, context="apply_centered_monomial")
    return jax.vmap(lambda psi: _apply_word(grid, psi, word.word, alpha))(state.psis)


def _word_norms(grid, psis, alphas, words):
    # Norms ‖(α̂ − α_b)_J ψ_b‖ for every row b and word J, shape (rows, words).
    def row(psi, alpha):
        return jnp.stack(
            [
                jnp.sqrt(
                    jnp.sum(jnp.abs(_apply_word(grid, psi, w, alpha)) ** 2)
                    * grid.cell_volume
                )
                for w in words
            ]
        )

    return jax.vmap(row)(psis, alphas)


def _default_form(k: int) -> str:
    return "quadratic" if k == 1 else "sum"


def _combine(weights, norms, form):
    if form == "quadratic":
        return jnp.sqrt(jnp.sum(weights * jnp.sum(norms**2, axis=-1), axis=-1))
    elif form == "sum":
        return jnp.sum(weights * jnp.sum(norms, axis=-1), axis=-1)
    else:
        raise ValueError(f"Unknown norm form '{form}'; use 'quadratic' or 'sum'.")


def sobolev_norm(
    state: QuantumState, k: int, alpha: ArrayLike, form: Optional[str] = None
) -> float:
    """The re-centred isotropic Sobolev norm `‖ρ‖_{H^k_α}`.

    Two forms are available, summing over one canonical word per multi-index
    `|J| = k`:

    - `"quadratic"`: `(Σ_b w_b Σ_J ‖(α̂ − α)_J ψ_b‖²)^{1/2}`. The default for `k = 1`.
    - `"sum"`: `Σ_b w_b Σ_J ‖(α̂ − α)_J ψ_b‖`. The default for `k >= 2`.

    `k = 0` returns the weighted sum of branch norms.
    """
    if not 0 <= k <= _MAX_DEGREE:
        raise ValueError(f"`k` must be between 0 and {_MAX_DEGREE}, got {k}.")
    grid = state.grid
    alpha = grid.phase_point(alpha)
    check_boundary(state, context="sobolev_norm")
    form = _default_form(k) if form is None else form
    words = [w.word for w in canonical_words(grid.dim, k)]
    alphas = jnp.broadcast_to(alpha, (state.n_branches, alpha.shape[0]))
    norms = _word_norms(grid, state.psis, alphas, words)
    return float(_combine(state.weights, norms, form))


def uncertainty_chain_check(
    state: QuantumState,
    alpha: ArrayLike,
    k_max: int = 4,
    form: str = "sum",
    rtol: float = 1e-10,
) -> CheckReport:
    """Checks `‖ρ‖_{H^k_α} >= √ℏ ‖ρ‖_{H^{k−1}_α}` for `k = 1, ..., k_max`.

    Failures are recorded in the report rather than raised.
    """
    if not 1 <= k_max <= _MAX_DEGREE:
        raise ValueError(f"`k_max` must be between 1 and {_MAX_DEGREE}.")
    sqrt_hbar = math.sqrt(state.grid.hbar)
    report = CheckReport("uncertainty_chain")
    previous = sobolev_norm(state, 0, alpha, form)
    for k in range(1, k_max + 1):
        current = sobolev_norm(state, k, alpha, form)
        lower = sqrt_hbar * previous
        margin = current - lower
        report.add(
            CheckEntry(
                name=f"H{k}",
                measured=current,
                bound=lower,
                passed=margin >= -rtol * max(lower, 1e-300),
                margin=margin,
                inputs={"k": k, "alpha": np.asarray(alpha, dtype=float).tolist()},
                form=form,
            )
        )
        previous = current
    return report


def sobolev_shift_ratio(
    state: QuantumState,
    beta: ArrayLike,
    alpha: ArrayLike,
    k: int,
    form: Optional[str] = None,
) -> float:
    """`‖τ_β ρ τ_β†‖_{H^k_α} / ((1 + |β| ℏ^{-1/2})^k ‖ρ‖_{H^k_α})`, the empirical
    constant of the Sobolev shift bound.
    """
    beta = state.grid.phase_point(beta)
    shifted = sobolev_norm(translate(state, beta), k, alpha, form)
    base = sobolev_norm(state, k, alpha, form)
    factor = (1 + float(jnp.linalg.norm(beta)) / math.sqrt(state.grid.hbar)) ** k
    return shifted / (factor * base)


#
# Operator localisation
#


def z_norm(
    operator: OperatorMatrix,
    k: int,
    lattice: CenterLattice,
    form: Optional[str] = None,
    boundary_tol: float = 1e-6,
) -> float:
    """`‖W‖_{Z^k} = sup_α ‖W|α⟩‖_{H^k_α}`, with the sup taken over the centres of
    `lattice`.

    **Raises:**

    [`egorax.EgoraxError`][] if some `W|α⟩` reaches the boundary band.
    """
    if not 0 <= k <= 3:
        raise ValueError(f"`k` must be between 0 and 3, got {k}.")
    grid = operator.grid
    form = _default_form(k) if form is None else form
    centers = lattice.centers()
    rows = operator.apply(coherent_matrix(grid, centers))
    mass = _boundary_masses(grid, rows)
    if float(jnp.max(mass)) > boundary_tol:
        raise EgoraxError(
            RESULTS.boundary_leak,
            f"z_norm: W|alpha> has boundary mass {float(jnp.max(mass)):.3e}.",
        )
    words = [w.word for w in canonical_words(grid.dim, k)]
    norms = _word_norms(grid, rows, centers, words)
    if form == "quadratic":
        per_center = jnp.sqrt(jnp.sum(norms**2, axis=-1))
    elif form == "sum":
        per_center = jnp.sum(norms, axis=-1)
    else:
        raise ValueError(f"Unknown norm form '{form}'; use 'quadratic' or 'sum'.")
    return float(jnp.max(per_center))


def _boundary_masses(grid: PhaseSpaceGrid, rows):
    band = grid.boundary_band
    x = grid.x_axis()
    p = grid.p_axis()
    x_mask = (x < grid.x_min[0] + band) | (x > grid.x_max[0] - band)
    p_mask = jnp.abs(p) > grid.momentum_limit[0] - band
    density = jnp.abs(rows) ** 2
    p_density = jnp.abs(jnp.fft.fft(rows, axis=-1)) ** 2 / grid.n_x
    return (
        jnp.sum(jnp.where(x_mask, density, 0), axis=-1)
        + jnp.sum(jnp.where(p_mask, p_density, 0), axis=-1)
    ) * grid.cell_volume


def sample_pairs(
    lattice: CenterLattice, n_pairs: int, seed: int = 0, min_separation: float = 0.0
) -> Float[Array, "pairs 2 phase"]:
    """Random pairs of lattice centres at least `min_separation` apart."""
    rng = np.random.default_rng(seed)
    centers = np.asarray(lattice.centers())
    pairs = []
    while len(pairs) < n_pairs:
        i, j = rng.integers(0, centers.shape[0], size=2)
        if i != j and np.linalg.norm(centers[i] - centers[j]) >= min_separation:
            pairs.append((centers[i], centers[j]))
    return jnp.asarray(np.array(pairs))


def offdiagonal_decay_check(
    operator: OperatorMatrix,
    k: int,
    pairs: Float[Array, "pairs 2 phase"],
    lattice: CenterLattice,
    z: Optional[float] = None,
) -> CheckReport:
    """Measures `|⟨α|W|β⟩| |α − β|^k / ‖W‖_{Z^k}` on the given pairs.

    **Arguments:**

    - `operator`: the operator `W`.
    - `k`: the decay order.
    - `pairs`: `(α, β)` pairs, shape `(pairs, 2, 2D)`.
    - `lattice`: used for `‖W‖_{Z^k}` when `z` is not given.
    - `z`: a precomputed `‖W‖_{Z^k}`.

    **Returns:**

    A report with one entry per pair, plus a final `"max_ratio"` entry, the
    empirical constant.
    """
    grid = operator.grid
    z = z_norm(operator, k, lattice) if z is None else z
    alphas = pairs[:, 0]
    betas = pairs[:, 1]
    bra = coherent_matrix(grid, alphas)
    ket = operator.apply(coherent_matrix(grid, betas))
    elements = jnp.abs(jnp.sum(bra.conj() * ket, axis=-1)) * grid.cell_volume
    distances = jnp.linalg.norm(alphas - betas, axis=-1)
    ratios = elements * distances**k / z
    report = CheckReport("offdiagonal_decay")
    for a, b, element, ratio in zip(
        np.asarray(alphas), np.asarray(betas), np.asarray(elements), np.asarray(ratios)
    ):
        report.add(
            CheckEntry(
                name="pair",
                measured=float(ratio),
                inputs={
                    "alpha": a.tolist(),
                    "beta": b.tolist(),
                    "element": float(element),
                },
            )
        )
    report.add(
        CheckEntry(
            name="max_ratio",
            measured=float(jnp.max(ratios)),
            inputs={"k": k, "z_norm": z},
        )
    )
    return report


#
# Operator norms
#


@eqx.filter_jit
def _power_iteration(matrix, v0, rtol, max_steps):
    gram = matrix.conj().T @ matrix

    def cond(carry):
        _, _, residual, theta, step = carry
        return (residual > rtol * theta) & (step < max_steps)

    def body(carry):
        v, _, _, _, step = carry
        w = gram @ v
        theta = jnp.real(jnp.vdot(v, w))
        residual = jnp.linalg.norm(w - theta * v)
        norm = jnp.linalg.norm(w)
        v = jnp.where(norm > 0, w / jnp.where(norm > 0, norm, 1), v)
        return v, w, residual, theta, step + 1

    init = (v0, v0, jnp.array(jnp.inf), jnp.array(0.0), jnp.array(0))
    v, _, residual, theta, steps = lax.while_loop(cond, body, init)
    return theta, residual, steps


def operator_norm(
    operator: Union[OperatorMatrix, ArrayLike],
    rtol: float = 1e-8,
    max_steps: int = 20000,
    seed: int = 0,
) -> float:
    """The spectral norm `‖A‖_{L² → L²}`, by power iteration on `A†A`.

    Iterates until the eigen-residual `‖A†A v − θ v‖` is at most `rtol · θ`.

    **Raises:**

    [`egorax.EgoraxError`][] with `RESULTS.power_iteration_failed` if `max_steps` is
    reached first.
    """
    matrix = operator.entries if isinstance(operator, OperatorMatrix) else operator
    matrix = jnp.asarray(matrix, dtype=complex)
    n = matrix.shape[0]
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    v0 = jnp.asarray(v0 / np.linalg.norm(v0))
    theta, residual, steps = _power_iteration(matrix, v0, rtol, max_steps)
    theta = float(theta)
    if theta == 0:
        return 0.0
    if float(residual) > rtol * theta:
        raise EgoraxError(
            RESULTS.power_iteration_failed,
            f"Residual {float(residual):.3e} after {int(steps)} steps.",
        )
    return math.sqrt(theta)


class SpectralWindow(eqx.Module):
    """Orthonormal eigenvectors of `Op_ℏ(|α − c|²)` with eigenvalue at most `R²`:
    the states localised in the phase-space disc of radius `R` about `c`.
    """

    basis: Complex[Array, "n m"]
    center: tuple[float, ...] = eqx.field(static=True)
    radius: float = eqx.field(static=True)

    @property
    def rank(self) -> int:
        return self.basis.shape[1]


def make_window(
    grid: PhaseSpaceGrid, center: Optional[ArrayLike] = None, radius: float = 1.2
) -> SpectralWindow:
    center = jnp.zeros(2 * grid.dim) if center is None else grid.phase_point(center)

    def radial(alpha):
        return jnp.sum((alpha - center) ** 2)

    eigenvalues, eigenvectors = jnp.linalg.eigh(weyl_quantize(radial, grid).entries)
    keep = eigenvalues <= radius**2
    if not bool(jnp.any(keep)):
        raise ValueError(
            f"The window of radius {radius} contains no states at hbar={grid.hbar}."
        )
    return SpectralWindow(
        eigenvectors[:, np.asarray(keep)],
        tuple(float(c) for c in center),
        float(radius),
    )


def windowed_operator_norm(
    operator: OperatorMatrix, window: SpectralWindow, rtol: float = 1e-8
) -> float:
    """`‖P A P‖` for the orthogonal projector `P` onto `window`."""
    basis = window.basis
    compressed = basis.conj().T @ operator.entries @ basis
    return operator_norm(compressed, rtol=rtol)

