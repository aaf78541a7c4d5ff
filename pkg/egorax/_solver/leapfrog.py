from .base import AbstractClassicalSolver
from .._custom_types import PhasePoint, RealScalarLike
from .._hamiltonian import AbstractHamiltonian, SeparableHamiltonian
from .._solution import RESULTS


class Leapfrog(AbstractClassicalSolver):
    """Kick–drift–kick leapfrog (Störmer–Verlet) for separable Hamiltonians
    `H = K(p) + V(x)`.

    Symplectic and second order: the Jacobian of one step has determinant one.
    """

    def check_model(self, model: AbstractHamiltonian) -> None:
        if not isinstance(model, SeparableHamiltonian):
            raise ValueError(
                f"`Leapfrog` needs a separable Hamiltonian, got model '{model.name}'."
            )

    def step(
        self, model: AbstractHamiltonian, alpha: PhasePoint, dt: RealScalarLike
    ) -> tuple[PhasePoint, RESULTS]:
        assert isinstance(model, SeparableHamiltonian)
        dim = model.dim
        x = alpha[:dim]
        p = alpha[dim:]
        p = p - 0.5 * dt * model.potential_gradient(x)
        x = x + dt * model.kinetic_gradient(p)
        p = p - 0.5 * dt * model.potential_gradient(x)
        return alpha.at[:dim].set(x).at[dim:].set(p), RESULTS.successful
