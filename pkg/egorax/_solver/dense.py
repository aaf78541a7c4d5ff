import jax.numpy as jnp
from jaxtyping import Array, Complex, Float

from .base import AbstractQuantumSolver
from .._custom_types import Branches, RealScalarLike
from .._grid import PhaseSpaceGrid
from .._hamiltonian import AbstractHamiltonian
from .._transforms import weyl_quantize


_SolverState = Complex[Array, "n n"]


def eigendecompose(
    model: AbstractHamiltonian, grid: PhaseSpaceGrid
) -> tuple[Float[Array, " n"], Complex[Array, "n n"]]:
    """Eigenvalues and eigenvectors of `Op_ℏ(H)` on a `D = 1` grid."""
    return jnp.linalg.eigh(weyl_quantize(model, grid).entries)


def propagator_matrix(
    eigenvalues: Float[Array, " n"],
    eigenvectors: Complex[Array, "n n"],
    t: RealScalarLike,
    hbar: float,
) -> Complex[Array, "n n"]:
    """`e^{−iĤt/ℏ}` assembled from an eigendecomposition of `Ĥ`."""
    phases = jnp.exp(-1j * eigenvalues * t / hbar)
    return (eigenvectors * phases) @ eigenvectors.conj().T


class DenseEigen(AbstractQuantumSolver[_SolverState]):
    """Propagation by the exact exponential of the Weyl-quantised Hamiltonian, from a
    dense Hermitian eigendecomposition.

    Supports general (non-separable) symbols. Exact in time, so `order` is infinite in
    practice; only for `D = 1` and `n_x <= 1024`.
    """

    def order(self) -> int:
        return 100

    def init(
        self, model: AbstractHamiltonian, grid: PhaseSpaceGrid, dt: RealScalarLike
    ) -> _SolverState:
        eigenvalues, eigenvectors = eigendecompose(model, grid)
        return propagator_matrix(eigenvalues, eigenvectors, dt, grid.hbar)

    def step(self, solver_state: _SolverState, psis: Branches) -> Branches:
        return jnp.einsum("jl,...l->...j", solver_state, psis)


