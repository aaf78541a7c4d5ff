import optimistix as optx

from .base import AbstractClassicalSolver
from .._custom_types import PhasePoint, RealScalarLike
from .._hamiltonian import AbstractHamiltonian
from .._solution import RESULTS


def _implicit_relation(k, nonlinear_solve_args):
    model, alpha, dt = nonlinear_solve_args
    return dt * model.vector_field(alpha + 0.5 * k) - k


class ImplicitMidpoint(AbstractClassicalSolver):
    """The implicit midpoint rule `α₁ = α₀ + dt X((α₀ + α₁)/2)`, for general symbols.

    Symplectic and second order. The implicit relation is solved for the increment
    `k = α₁ − α₀` by Newton's method, started from the explicit Euler increment.
    """

    root_finder: optx.AbstractRootFinder = optx.Newton(rtol=1e-13, atol=1e-13)
    root_find_max_steps: int = 32

    def step(
        self, model: AbstractHamiltonian, alpha: PhasePoint, dt: RealScalarLike
    ) -> tuple[PhasePoint, RESULTS]:
        k0 = dt * model.vector_field(alpha)
        nonlinear_sol = optx.root_find(
            _implicit_relation,
            self.root_finder,
            k0,
            (model, alpha, dt),
            throw=False,
            max_steps=self.root_find_max_steps,
        )
        result = RESULTS.promote(nonlinear_sol.result)
        return alpha + nonlinear_sol.value, result
