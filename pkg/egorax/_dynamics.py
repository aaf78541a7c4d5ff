import logging
import math
from collections.abc import Callable
from typing import Optional

import equinox as eqx
import jax
import jax.lax as lax
import jax.numpy as jnp
import numpy as np
from jaxtyping import Array, ArrayLike, Float

from ._custom_types import Box, PhaseCloud, PhasePoint
from ._grid import PhaseSpaceGrid
from ._hamiltonian import AbstractHamiltonian, harmonic_flow, harmonic_oscillator
from ._measure import PhaseSpaceMeasure
from ._solution import EgoraxError, FlowSolution, RESULTS
from ._solver import (
    AbstractClassicalSolver,
    AbstractQuantumSolver,
    DenseEigen,
    eigendecompose,
    ImplicitMidpoint,
    Leapfrog,
    propagator_matrix,
    SplitStep,
)
from ._state import check_boundary, coherent_state, overlap, QuantumState
from ._transforms import OperatorMatrix


logger = logging.getLogger(__name__)


#
# Quantum propagation
#


def default_time_step(hbar: float) -> float:
    return min(0.01, 0.1 * math.sqrt(hbar))


def _steps(T: float, dt: Optional[float], default: float) -> tuple[int, float]:
    if T == 0:
        return 0, 0.0
    if dt is None:
        n = max(1, math.ceil(abs(T) / default - 1e-9))
        return n, T / n
    n = round(T / dt)
    if n < 1 or abs(n * dt - T) > 1e-12 * max(1.0, abs(T)):
        raise ValueError(f"The time step dt={dt} does not divide T={T}.")
    return n, T / n


def default_quantum_solver(model: AbstractHamiltonian) -> AbstractQuantumSolver:
    return SplitStep() if model.is_separable else DenseEigen()


@eqx.filter_jit
def _run_quantum(solver, solver_state, psis, n_steps):
    return lax.fori_loop(0, n_steps, lambda _, y: solver.step(solver_state, y), psis)


def propagate_quantum(
    state: QuantumState,
    model: AbstractHamiltonian,
    T: float,
    dt: Optional[float] = None,
    solver: Optional[AbstractQuantumSolver] = None,
    checkpoints: int = 8,
) -> QuantumState:
    """Evolves every branch of `state` by `e^{−iĤT/ℏ}`. Weights are unchanged.

    **Arguments:**

    - `state`: the initial state.
    - `model`: the Hamiltonian.
    - `T`: the final time. `T = 0` returns `state` itself.
    - `dt`: the time step, which must divide `T`. Defaults to
        `min(0.01, 0.1 √ℏ)`, shortened so that it divides `T`.
    - `solver`: a quantum solver. Defaults to [`egorax.SplitStep`][] for separable
        models and [`egorax.DenseEigen`][] otherwise.
    - `checkpoints`: the number of times along the run at which the boundary monitor
        is evaluated.

    **Returns:**

    The evolved [`egorax.QuantumState`][].

    **Raises:**

    `ValueError` if the solver does not support the model, and
    [`egorax.EgoraxError`][] if the boundary monitor fires.
    """
    grid = state.grid
    n_steps, dt = _steps(float(T), dt, default_time_step(grid.hbar))
    if n_steps == 0:
        return state
    solver = default_quantum_solver(model) if solver is None else solver
    if isinstance(solver, DenseEigen):
        # Exact in time: one application of e^{−iĤT/ℏ}.
        solver_state = solver.init(model, grid, T)
        psis = solver.step(solver_state, state.psis)
        return check_boundary(state.with_psis(psis), context="propagate_quantum")
    solver_state = solver.init(model, grid, dt)
    psis = state.psis
    done = 0
    n_chunks = max(1, min(checkpoints, n_steps))
    for chunk in range(n_chunks):
        target = (chunk + 1) * n_steps // n_chunks
        psis = _run_quantum(solver, solver_state, psis, target - done)
        done = target
        check_boundary(
            state.with_psis(psis),
            context=f"propagate_quantum at t={done * dt:.4g}",
        )
    logger.debug("Propagated %d branches over %d steps.", state.n_branches, n_steps)
    return state.with_psis(psis)


def harmonic_fidelity_error(
    grid: PhaseSpaceGrid, T: float, dt: Optional[float] = None
) -> float:
    """`1 − |⟨α_T|U_T|α₀⟩|` for the harmonic oscillator, whose coherent states evolve
    exactly into coherent states at the rotated centre.
    """
    alpha0 = jnp.zeros(2 * grid.dim).at[0].set(1.0)
    model = harmonic_oscillator(grid.dim)
    evolved = propagate_quantum(coherent_state(grid, alpha0), model, T, dt)
    exact = coherent_state(grid, harmonic_flow(alpha0, T))
    return 1 - float(jnp.abs(overlap(grid, exact.psi, evolved.psi)))


def calibrate_time_step(
    grid: PhaseSpaceGrid, T: float, tol: float = 1e-6, max_halvings: int = 6
) -> float:
    """Halves the default quantum time step until the harmonic-oscillator oracle has
    `1 − fidelity < tol` at time `T`.
    """
    n, dt = _steps(float(T), None, default_time_step(grid.hbar))
    if n == 0:
        return default_time_step(grid.hbar)
    for _ in range(max_halvings + 1):
        error = harmonic_fidelity_error(grid, T, dt)
        if error < tol:
            return dt
        logger.debug("Time step %.3g has oracle error %.3g; halving.", dt, error)
        dt = dt / 2
    raise EgoraxError(
        RESULTS.energy_drift,
        f"Harmonic oracle error stayed above {tol} down to dt={dt * 2:.3g}.",
    )


def dense_propagator(
    model: AbstractHamiltonian, grid: PhaseSpaceGrid, T: float
) -> OperatorMatrix:
    """`U_T = e^{−iĤT/ℏ}` as a dense matrix, for `D = 1` and `n_x <= 1024`."""
    eigenvalues, eigenvectors = eigendecompose(model, grid)
    return OperatorMatrix(
        grid, propagator_matrix(eigenvalues, eigenvectors, T, grid.hbar)
    )


def evolve_operator(
    propagator: OperatorMatrix, operator: OperatorMatrix
) -> OperatorMatrix:
    """`U A U†`."""
    return propagator @ operator @ propagator.adjoint()


#
# Classical flows
#


def default_classical_solver(model: AbstractHamiltonian) -> AbstractClassicalSolver:
    return Leapfrog() if model.is_separable else ImplicitMidpoint()


@eqx.filter_jit
def _integrate(
    solver: AbstractClassicalSolver,
    model: AbstractHamiltonian,
    alphas: PhaseCloud,
    dt: Float[Array, ""],
    n_steps: int,
    guard: bool,
    save_path: bool = False,
):
    def single(alpha0):
        energy0 = model(alpha0)

        def body(carry, _):
            alpha, in_box, drift, result = carry
            alpha, step_result = solver.step(model, alpha, dt)
            in_box = in_box & model.in_box(alpha) if guard else in_box
            drift = jnp.maximum(drift, jnp.abs(model(alpha) - energy0))
            result = RESULTS.where(
                result == RESULTS.successful, step_result, result
            )
            return (alpha, in_box, drift, result), (alpha if save_path else None)

        init = (
            alpha0,
            model.in_box(alpha0) if guard else jnp.array(True),
            jnp.zeros(()),
            RESULTS.successful,
        )
        final, path = lax.scan(body, init, None, length=n_steps)
        alpha, in_box, drift, result = final
        return alpha, in_box, drift, result, path

    return jax.vmap(single)(alphas)


def _flow_batch(
    alphas: PhaseCloud,
    model: AbstractHamiltonian,
    T: float,
    dt: float,
    solver: Optional[AbstractClassicalSolver],
    energy_tol: float,
    max_refinements: int,
    save_path: bool = False,
):
    solver = default_classical_solver(model) if solver is None else solver
    solver.check_model(model)
    n_steps = max(1, math.ceil(abs(T) / dt - 1e-9))
    for _ in range(max_refinements + 1):
        step = T / n_steps
        final, in_box, drift, results, path = _integrate(
            solver, model, alphas, jnp.asarray(step), n_steps, True, save_path
        )
        if not bool(jnp.all(results == RESULTS.successful)):
            raise EgoraxError(
                RESULTS.implicit_solve_failed,
                f"Implicit midpoint solve failed for model '{model.name}' at "
                f"dt={step:.3g}.",
            )
        if not bool(jnp.all(in_box)):
            index = int(jnp.argmin(in_box))
            raise EgoraxError(
                RESULTS.box_exit,
                f"Trajectory from {np.asarray(alphas[index]).tolist()} left the "
                f"Lipschitz box {model.lipschitz_box} of model '{model.name}'.",
            )
        worst = float(jnp.max(drift))
        if worst <= energy_tol:
            return final, path, step
        logger.debug("Energy drift %.3g at dt=%.3g; refining.", worst, step)
        n_steps *= 2
    raise EgoraxError(
        RESULTS.energy_drift,
        f"Energy drift {worst:.3g} above {energy_tol} at dt={step:.3g} for model "
        f"'{model.name}'.",
    )


def flow_point(
    alpha0: ArrayLike,
    model: AbstractHamiltonian,
    T: float,
    dt: float = 1e-3,
    solver: Optional[AbstractClassicalSolver] = None,
    energy_tol: float = 1e-8,
    max_refinements: int = 8,
) -> PhasePoint:
    """The classical flow `Φ_T(α₀)` of Hamilton's equations.

    The time step is halved until the energy drift along the trajectory is at most
    `energy_tol`.

    **Arguments:**

    - `alpha0`: the initial point.
    - `model`: the Hamiltonian.
    - `T`: the time. May be negative.
    - `dt`: the initial time step, shortened to divide `T`.
    - `solver`: the integrator. Defaults to [`egorax.Leapfrog`][] for separable
        models and [`egorax.ImplicitMidpoint`][] otherwise.
    - `energy_tol`: the allowed energy drift.
    - `max_refinements`: the maximum number of halvings of `dt`.

    **Returns:**

    The point `Φ_T(α₀)`.

    **Raises:**

    [`egorax.EgoraxError`][] if the trajectory leaves the model's `lipschitz_box`, if
    an implicit solve fails, or if the energy drift cannot be brought below
    `energy_tol`.
    """
    alpha0 = jnp.asarray(alpha0, dtype=float).reshape(-1)
    if T == 0:
        return alpha0
    final, _, _ = _flow_batch(
        alpha0[None], model, T, dt, solver, energy_tol, max_refinements
    )
    return final[0]


def flow_trajectory(
    alpha0: ArrayLike,
    model: AbstractHamiltonian,
    T: float,
    dt: float = 1e-3,
    solver: Optional[AbstractClassicalSolver] = None,
    energy_tol: float = 1e-8,
    max_refinements: int = 8,
) -> FlowSolution:
    """Like [`egorax.flow_point`][], but returns the whole trajectory as a
    [`egorax.FlowSolution`][].
    """
    alpha0 = jnp.asarray(alpha0, dtype=float).reshape(-1)
    if T == 0:
        return FlowSolution(
            ts=jnp.zeros(1),
            alphas=alpha0[None],
            energies=model(alpha0)[None],
            result=RESULTS.successful,
        )
    _, path, step = _flow_batch(
        alpha0[None], model, T, dt, solver, energy_tol, max_refinements, True
    )
    alphas = jnp.concatenate([alpha0[None], path[0]])
    ts = step * jnp.arange(alphas.shape[0])
    return FlowSolution(
        ts=ts,
        alphas=alphas,
        energies=jax.vmap(model)(alphas),
        result=RESULTS.successful,
    )


def pushforward(
    measure: PhaseSpaceMeasure,
    model: AbstractHamiltonian,
    T: float,
    dt: float = 1e-3,
    solver: Optional[AbstractClassicalSolver] = None,
    energy_tol: float = 1e-8,
) -> PhaseSpaceMeasure:
    """The pushforward `Φ_T μ` of a nonnegative measure: every atom is advected by the
    flow, masses unchanged. The result is a particle measure (never re-gridded).

    **Raises:**

    `ValueError` for signed measures; [`egorax.EgoraxError`][] as for
    [`egorax.flow_point`][].
    """
    if measure.signed:
        raise ValueError("Cannot push forward a signed measure.")
    if T == 0:
        return measure
    final, _, _ = _flow_batch(
        measure.locations, model, T, dt, solver, energy_tol, max_refinements=8
    )
    return PhaseSpaceMeasure(final, measure.masses, dropped_mass=measure.dropped_mass)


def flow_map(
    model: AbstractHamiltonian,
    T: float,
    dt: float = 1e-3,
    solver: Optional[AbstractClassicalSolver] = None,
) -> Callable[[PhasePoint], PhasePoint]:
    """An unguarded, jittable and vmappable `α ↦ Φ_T(α)` at fixed step size.

    Used to compose symbols with the flow on lattices that extend beyond the
    Lipschitz box. `T` may be negative (the backward flow).
    """
    solver = default_classical_solver(model) if solver is None else solver
    solver.check_model(model)
    n_steps = max(1, math.ceil(abs(T) / dt - 1e-9))
    step = T / n_steps

    def apply(alpha: PhasePoint) -> PhasePoint:
        def body(_, a):
            return solver.step(model, a, step)[0]

        return lax.fori_loop(0, n_steps, body, alpha)

    return apply


def _sample(box: Box, n: int, rng: np.random.Generator) -> np.ndarray:
    lower = np.array([lo for lo, _ in box])
    upper = np.array([hi for _, hi in box])
    return lower + (upper - lower) * rng.random((n, len(box)))


def flow_lipschitz(
    model: AbstractHamiltonian,
    T: float,
    sample_box: Optional[Box] = None,
    n_samples: int = 64,
    dt: float = 1e-3,
    seed: int = 0,
    separation: float = 1e-5,
) -> float:
    """Empirical Lipschitz constant of `Φ_T`: the largest `|Φ_T β − Φ_T α| / |β − α|`
    over sampled pairs.

    Two kinds of pairs are sampled: near pairs, with `β − α` of length `separation`
    along the top right singular vector of the flow Jacobian at `α`, and far pairs
    of independent random points.

    **Arguments:**

    - `model`: the Hamiltonian.
    - `T`: the time.
    - `sample_box`: the box points are drawn from. Defaults to the middle quarter of the
        model's `lipschitz_box`.
    - `n_samples`: the number of points (and of pairs of each kind).
    - `dt`: initial time step of the guarded flow.
    - `seed`: seed for the sampling.
    - `separation`: distance of the near pairs.

    **Returns:**

    The estimate.
    """
    if sample_box is None:
        sample_box = tuple(
            (0.625 * lo + 0.375 * hi, 0.375 * lo + 0.625 * hi)
            for lo, hi in model.lipschitz_box
        )
    rng = np.random.default_rng(seed)
    points = jnp.asarray(_sample(sample_box, n_samples, rng))
    partners = jnp.asarray(_sample(sample_box, n_samples, rng))
    unguarded = flow_map(model, T, dt)
    jacobians = jax.vmap(jax.jacfwd(unguarded))(points)
    _, _, vh = jnp.linalg.svd(jacobians)
    near = points + separation * vh[:, 0, :]
    everything = jnp.concatenate([points, near, partners])
    images, _, _ = _flow_batch(
        everything, model, T, dt, None, energy_tol=1e-8, max_refinements=8
    )
    image_points = images[:n_samples]
    image_near = images[n_samples : 2 * n_samples]
    image_partners = images[2 * n_samples :]
    near_ratio = jnp.linalg.norm(image_near - image_points, axis=-1) / jnp.linalg.norm(
        near - points, axis=-1
    )
    far_ratio = jnp.linalg.norm(
        image_partners - image_points, axis=-1
    ) / jnp.linalg.norm(partners - points, axis=-1)
    return float(jnp.maximum(jnp.max(near_ratio), jnp.max(far_ratio)))


def leapfrog_jacobian_determinant(
    model: AbstractHamiltonian, alpha: ArrayLike, dt: float
) -> float:
    """Determinant of the Jacobian of one leapfrog step."""
    alpha = jnp.asarray(alpha, dtype=float)
    solver = Leapfrog()
    solver.check_model(model)
    jacobian = jax.jacfwd(lambda a: solver.step(model, a, dt)[0])(alpha)
    return float(jnp.linalg.det(jacobian))


#
# Self-convergence
#


def _order(coarse, middle, fine, norm: Callable) -> float:
    e_coarse = norm(coarse - middle)
    e_fine = norm(middle - fine)
    if not (e_fine > 0 and e_coarse > 0):
        raise ValueError(
            "The solutions at dt, dt/2 and dt/4 agree to round-off; there is no "
            "order to measure."
        )
    return math.log2(e_coarse / e_fine)


def classical_convergence_order(
    alpha0: ArrayLike,
    model: AbstractHamiltonian,
    T: float,
    dt: float,
    solver: Optional[AbstractClassicalSolver] = None,
) -> float:
    """The measured self-convergence order
    `log₂(|Φ^{dt} − Φ^{dt/2}| / |Φ^{dt/2} − Φ^{dt/4}|)` of a classical solver at fixed
    steps, without the energy-drift refinement of [`egorax.flow_point`][].

    **Raises:**

    `ValueError` if `dt` does not divide `T`, and [`egorax.EgoraxError`][] if an
    implicit solve fails or a trajectory leaves the Lipschitz box.
    """
    alpha0 = jnp.asarray(alpha0, dtype=float).reshape(1, -1)
    solver = default_classical_solver(model) if solver is None else solver
    solver.check_model(model)
    n_steps, dt = _steps(float(T), dt, dt)
    if n_steps == 0:
        raise ValueError("A convergence order needs `T != 0`.")
    finals = []
    for k in (1, 2, 4):
        final, in_box, _, results, _ = _integrate(
            solver, model, alpha0, jnp.asarray(dt / k), n_steps * k, True
        )
        if not bool(jnp.all(results == RESULTS.successful)):
            raise EgoraxError(
                RESULTS.implicit_solve_failed, f"Implicit solve failed at dt={dt / k}."
            )
        if not bool(jnp.all(in_box)):
            raise EgoraxError(
                RESULTS.box_exit, f"Trajectory left the box of model '{model.name}'."
            )
        finals.append(final[0])
    order = _order(*finals, norm=lambda d: float(jnp.linalg.norm(d)))
    logger.debug("Classical self-convergence order %.3f at dt=%.3g.", order, dt)
    return order


def quantum_convergence_order(
    state: QuantumState,
    model: AbstractHamiltonian,
    T: float,
    dt: float,
    solver: Optional[AbstractQuantumSolver] = None,
) -> float:
    """The measured self-convergence order of a time-stepping quantum solver, from the
    `L²` differences of the states propagated with `dt`, `dt/2` and `dt/4`.

    **Raises:**

    `ValueError` for [`egorax.DenseEigen`][], which is exact in time, or if `dt` does
    not divide `T`.
    """
    solver = default_quantum_solver(model) if solver is None else solver
    if isinstance(solver, DenseEigen):
        raise ValueError("DenseEigen is exact in time and has no convergence order.")
    n_steps, dt = _steps(float(T), dt, dt)
    if n_steps == 0:
        raise ValueError("A convergence order needs `T != 0`.")
    psis = [
        propagate_quantum(state, model, T, dt / k, solver=solver).psis
        for k in (1, 2, 4)
    ]
    scale = math.sqrt(state.grid.cell_volume)
    order = _order(*psis, norm=lambda d: float(jnp.linalg.norm(d)) * scale)
    logger.debug("Quantum self-convergence order %.3f at dt=%.3g.", order, dt)
    return order
