import abc
from typing import Generic, TypeVar

import equinox as eqx
from jaxtyping import Array, PyTree

from .._custom_types import Branches, PhasePoint, RealScalarLike
from .._grid import PhaseSpaceGrid
from .._hamiltonian import AbstractHamiltonian
from .._solution import RESULTS


_SolverState = TypeVar("_SolverState", bound=PyTree[Array])


class AbstractQuantumSolver(eqx.Module, Generic[_SolverState]):
    """Abstract base class for time steppers of the Schrödinger equation
    `iℏ ∂_t ψ = Op_ℏ(H) ψ` on a [`egorax.PhaseSpaceGrid`][].

    A solver is split into `init`, which precomputes whatever depends only on the
    model, the grid and the time step, and `step`, which advances a batch of
    wavefunctions by one time step.
    """

    def order(self) -> int:
        """Order of the local truncation error in time."""
        return 2

    @abc.abstractmethod
    def init(
        self, model: AbstractHamiltonian, grid: PhaseSpaceGrid, dt: RealScalarLike
    ) -> _SolverState:
        """Precomputes the propagator data.

        **Arguments:**

        - `model`: the Hamiltonian.
        - `grid`: the grid the wavefunctions live on.
        - `dt`: the time step.

        **Returns:**

        The solver state, reused by every call to `step`.

        **Raises:**

        `ValueError` if this solver cannot propagate `model` on `grid`.
        """

    @abc.abstractmethod
    def step(self, solver_state: _SolverState, psis: Branches) -> Branches:
        """Advances every branch of `psis` by one time step."""


class AbstractClassicalSolver(eqx.Module):
    """Abstract base class for one-step integrators of Hamilton's equations."""

    def order(self) -> int:
        return 2

    @abc.abstractmethod
    def step(
        self, model: AbstractHamiltonian, alpha: PhasePoint, dt: RealScalarLike
    ) -> tuple[PhasePoint, RESULTS]:
        """Advances a single phase-space point by `dt`.

        **Returns:**

        A tuple of the new point and a [`egorax.RESULTS`][] member.
        """

    def check_model(self, model: AbstractHamiltonian) -> None:
        pass
