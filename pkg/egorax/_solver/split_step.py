import jax
import jax.numpy as jnp
from jaxtyping import Array, Complex

from .base import AbstractQuantumSolver
from .._custom_types import Branches, RealScalarLike
from .._grid import PhaseSpaceGrid
from .._hamiltonian import AbstractHamiltonian, SeparableHamiltonian


_SolverState = tuple[Complex[Array, "..."], Complex[Array, "..."]]


class SplitStep(AbstractQuantumSolver[_SolverState]):
    """Strang splitting in the order `V/2 – K – V/2`, with the kinetic factor applied
    in Fourier space.

    Exactly unitary and second order. Only supports separable Hamiltonians.
    """

    def init(
        self, model: AbstractHamiltonian, grid: PhaseSpaceGrid, dt: RealScalarLike
    ) -> _SolverState:
        if not isinstance(model, SeparableHamiltonian):
            raise ValueError(
                f"`SplitStep` needs a separable Hamiltonian, got model '{model.name}'."
            )
        x = grid.positions().reshape(-1, grid.dim)
        p = grid.momenta().reshape(-1, grid.dim)
        potential = jax.vmap(model.potential)(x).reshape(grid.shape)
        kinetic = jax.vmap(model.kinetic)(p).reshape(grid.shape)
        half_kick = jnp.exp(-0.5j * dt * potential / grid.hbar)
        drift = jnp.exp(-1j * dt * kinetic / grid.hbar)
        return half_kick, drift

    def step(self, solver_state: _SolverState, psis: Branches) -> Branches:
        half_kick, drift = solver_state
        axes = tuple(range(psis.ndim - half_kick.ndim, psis.ndim))
        psis = half_kick * psis
        psis = jnp.fft.ifftn(drift * jnp.fft.fftn(psis, axes=axes), axes=axes)
        return half_kick * psis
