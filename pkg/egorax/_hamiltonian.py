import abc
import dataclasses
import logging
import math
from collections.abc import Callable
from typing import Optional, Union

import equinox as eqx
import jax
import jax.numpy as jnp
import numpy as np
from jaxtyping import Array, Bool, Float

from ._custom_types import Box, PhaseCloud, PhasePoint, Symbol


logger = logging.getLogger(__name__)


class AbstractHamiltonian(eqx.Module):
    """Abstract base class for Hamiltonian models: a real symbol `H(x, p)` on phase
    space, together with the box over which its derivatives are estimated.

    Derivative oracles are obtained by automatic differentiation of the symbol.
    """

    name: eqx.AbstractVar[str]
    dim: eqx.AbstractVar[int]
    lipschitz_box: eqx.AbstractVar[Box]

    @abc.abstractmethod
    def __call__(self, alpha: PhasePoint) -> Float[Array, ""]:
        """Evaluates the symbol at a single phase-space point."""

    @property
    def is_separable(self) -> bool:
        return False

    def gradient(self, alpha: PhasePoint) -> PhasePoint:
        return jax.grad(self)(alpha)

    def vector_field(self, alpha: PhasePoint) -> PhasePoint:
        """Hamilton's equations: `(∂H/∂p, −∂H/∂x)`."""
        grad = self.gradient(alpha)
        return jnp.concatenate([grad[self.dim :], -grad[: self.dim]])

    def in_box(self, alpha: Float[Array, "... phase"]) -> Bool[Array, "..."]:
        lower = jnp.array([lo for lo, _ in self.lipschitz_box])
        upper = jnp.array([hi for _, hi in self.lipschitz_box])
        return jnp.all((alpha >= lower) & (alpha <= upper), axis=-1)

    def __check_init__(self):
        if len(self.lipschitz_box) != 2 * self.dim:
            raise ValueError(
                f"`lipschitz_box` must have {2 * self.dim} intervals, got "
                f"{len(self.lipschitz_box)}."
            )
        for lo, hi in self.lipschitz_box:
            if not hi > lo:
                raise ValueError(f"Degenerate `lipschitz_box` interval ({lo}, {hi}).")


class SeparableHamiltonian(AbstractHamiltonian):
    """`H(x, p) = K(p) + V(x)`.

    Required by the split-step propagator and the leapfrog flow.
    """

    kinetic: Callable[[Float[Array, " dim"]], Float[Array, ""]] = eqx.field(
        static=True
    )
    potential: Callable[[Float[Array, " dim"]], Float[Array, ""]] = eqx.field(
        static=True
    )
    dim: int = eqx.field(static=True)
    lipschitz_box: Box = eqx.field(static=True)
    name: str = eqx.field(static=True, default="separable")

    @property
    def is_separable(self) -> bool:
        return True

    def __call__(self, alpha: PhasePoint) -> Float[Array, ""]:
        return self.kinetic(alpha[self.dim :]) + self.potential(alpha[: self.dim])

    def kinetic_gradient(self, p: Float[Array, " dim"]) -> Float[Array, " dim"]:
        return jax.grad(self.kinetic)(p)

    def potential_gradient(self, x: Float[Array, " dim"]) -> Float[Array, " dim"]:
        return jax.grad(self.potential)(x)

    def kinetic_hessian(self, p: Float[Array, " dim"]) -> Float[Array, "dim dim"]:
        return jax.hessian(self.kinetic)(p)

    def potential_hessian(self, x: Float[Array, " dim"]) -> Float[Array, "dim dim"]:
        return jax.hessian(self.potential)(x)

    def vector_field(self, alpha: PhasePoint) -> PhasePoint:
        return jnp.concatenate(
            [
                self.kinetic_gradient(alpha[self.dim :]),
                -self.potential_gradient(alpha[: self.dim]),
            ]
        )


class GeneralSymbolHamiltonian(AbstractHamiltonian):
    """An arbitrary real symbol `H(α)`. Propagated quantum mechanically by dense
    diagonalisation, and classically by the implicit midpoint rule.
    """

    symbol: Symbol = eqx.field(static=True)
    dim: int = eqx.field(static=True)
    lipschitz_box: Box = eqx.field(static=True)
    name: str = eqx.field(static=True, default="general")

    def __call__(self, alpha: PhasePoint) -> Float[Array, ""]:
        return self.symbol(alpha)


@dataclasses.dataclass(frozen=True)
class AdmissibilityReport:
    """Sampled derivative bounds of a Hamiltonian over its `lipschitz_box`.

    **Attributes:**

    - `lipschitz`: the estimate of `Λ_H`.
    - `kinetic_hessian_sup`, `potential_hessian_sup`: sampled `sup ‖Hess K‖` and
        `sup ‖Hess V‖` (spectral norms). `None` for general symbols.
    - `hessian_sup`: sampled `sup ‖Hess H‖` over the phase-space box.
    - `derivative_sups`: maps each order `2, 3, 4` to the sampled `sup |∂^J H|` over
        all multi-indices `J` of that order.
    - `samples_per_axis`: the lattice resolution used for the Hessian sup.
    """

    lipschitz: float
    kinetic_hessian_sup: Optional[float]
    potential_hessian_sup: Optional[float]
    hessian_sup: float
    derivative_sups: dict[int, float]
    samples_per_axis: int

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["derivative_sups"] = {str(k): v for k, v in self.derivative_sups.items()}
        return out


def _box_lattice(box: Box, n: int) -> Float[Array, "points axes"]:
    axes = [jnp.linspace(lo, hi, n) for lo, hi in box]
    return jnp.stack(jnp.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(box))


def _sup_spectral_norm(hessian: Callable, points: Float[Array, "points axes"]) -> float:
    hessians = jax.vmap(hessian)(points)
    if not bool(jnp.all(jnp.isfinite(hessians))):
        raise ValueError("Hamiltonian oracle returned a non-finite value.")
    return float(jnp.max(jnp.linalg.norm(hessians, ord=2, axis=(-2, -1))))


def _nested_derivative(fn: Callable, order: int) -> Callable:
    for _ in range(order):
        fn = jax.jacfwd(fn)
    return fn


def estimate_lipschitz(
    model: AbstractHamiltonian,
    samples_per_axis: int = 201,
    derivative_samples: int = 4096,
) -> tuple[float, AdmissibilityReport]:
    """Estimates `Λ_H` by dense sampling of Hessian spectral norms over the model's
    `lipschitz_box`.

    For a separable model `Λ_H = ½ (sup ‖Hess K‖ + sup ‖Hess V‖)`, with `K` sampled on
    the momentum part of the box and `V` on the position part. For a general symbol
    `Λ_H = sup ‖Hess H‖` over the whole box.

    **Arguments:**

    - `model`: the Hamiltonian.
    - `samples_per_axis`: lattice resolution, inclusive of the box edges. For general
        symbols with `D = 2` the resolution is reduced to keep the lattice below
        `2**20` points.
    - `derivative_samples`: approximate number of points at which the order 2–4
        derivative tensors are sampled for the admissibility report.

    **Returns:**

    A tuple `(lipschitz, report)`.

    **Raises:**

    `ValueError` if the oracle returns a non-finite value anywhere on the lattice.
    """
    dim = model.dim
    box = model.lipschitz_box
    if isinstance(model, SeparableHamiltonian):
        x_points = _box_lattice(box[:dim], samples_per_axis)
        p_points = _box_lattice(box[dim:], samples_per_axis)
        kinetic_sup = _sup_spectral_norm(model.kinetic_hessian, p_points)
        potential_sup = _sup_spectral_norm(model.potential_hessian, x_points)
        lipschitz = 0.5 * (kinetic_sup + potential_sup)
        hessian_sup = max(kinetic_sup, potential_sup)
    else:
        n = min(samples_per_axis, int((2**20) ** (1 / (2 * dim))))
        points = _box_lattice(box, n)
        hessian_sup = _sup_spectral_norm(jax.hessian(model), points)
        kinetic_sup = potential_sup = None
        lipschitz = hessian_sup
        samples_per_axis = n

    coarse = max(3, int(round(derivative_samples ** (1 / (2 * dim)))))
    points = _box_lattice(box, coarse)
    derivative_sups = {}
    for order in (2, 3, 4):
        derivative = _nested_derivative(model, order)
        values = jax.vmap(derivative)(points)
        if not bool(jnp.all(jnp.isfinite(values))):
            raise ValueError("Hamiltonian oracle returned a non-finite value.")
        derivative_sups[order] = float(jnp.max(jnp.abs(values)))
    report = AdmissibilityReport(
        lipschitz=float(lipschitz),
        kinetic_hessian_sup=kinetic_sup,
        potential_hessian_sup=potential_sup,
        hessian_sup=float(hessian_sup),
        derivative_sups=derivative_sups,
        samples_per_axis=samples_per_axis,
    )
    logger.debug("Lipschitz estimate for %s: %s", model.name, report)
    return float(lipschitz), report


def sample_box(
    model: AbstractHamiltonian, n_samples: int, seed: int = 0
) -> PhaseCloud:
    """Uniform random points of the model's `lipschitz_box`."""
    rng = np.random.default_rng(seed)
    lower = np.array([lo for lo, _ in model.lipschitz_box])
    upper = np.array([hi for _, hi in model.lipschitz_box])
    return jnp.asarray(lower + (upper - lower) * rng.random((n_samples, len(lower))))


#
# Canonical models
#


def _box(dim: int, x_extent: float, p_extent: float) -> Box:
    return ((-x_extent, x_extent),) * dim + ((-p_extent, p_extent),) * dim


def _half_square(v: Float[Array, " dim"]) -> Float[Array, ""]:
    return 0.5 * jnp.sum(v**2)


def harmonic_oscillator(
    dim: int = 1, omega: float = 1.0, x_extent: float = 8.0, p_extent: float = 8.0
) -> SeparableHamiltonian:
    """`H = |p|²/2 + ω²|x|²/2`. Its flow is a rotation of phase space."""
    return SeparableHamiltonian(
        kinetic=_half_square,
        potential=lambda x: 0.5 * omega**2 * jnp.sum(x**2),
        dim=dim,
        lipschitz_box=_box(dim, x_extent, p_extent),
        name="harmonic",
    )


def pendulum(
    dim: int = 1, x_extent: float = 8.0, p_extent: float = 8.0
) -> SeparableHamiltonian:
    """`H = |p|²/2 − Σ_a cos x_a`."""
    return SeparableHamiltonian(
        kinetic=_half_square,
        potential=lambda x: -jnp.sum(jnp.cos(x)),
        dim=dim,
        lipschitz_box=_box(dim, x_extent, p_extent),
        name="pendulum",
    )


def free_particle(
    dim: int = 1, x_extent: float = 8.0, p_extent: float = 8.0
) -> SeparableHamiltonian:
    return SeparableHamiltonian(
        kinetic=_half_square,
        potential=lambda x: jnp.zeros(()),
        dim=dim,
        lipschitz_box=_box(dim, x_extent, p_extent),
        name="free",
    )


def linear_potential(
    dim: int = 1,
    force: Union[float, tuple[float, ...]] = 1.0,
    x_extent: float = 8.0,
    p_extent: float = 8.0,
) -> SeparableHamiltonian:
    """`H = |p|²/2 − F·x`. The flow is affine."""
    force = jnp.broadcast_to(jnp.asarray(force, dtype=float), (dim,))
    return SeparableHamiltonian(
        kinetic=_half_square,
        potential=lambda x: -jnp.sum(force * x),
        dim=dim,
        lipschitz_box=_box(dim, x_extent, p_extent),
        name="linear",
    )


def anharmonic(
    dim: int = 1, coupling: float = 1.0, x_extent: float = 3.0, p_extent: float = 8.0
) -> SeparableHamiltonian:
    """`H = |p|²/2 + g Σ_a x_a⁴`. Not globally admissible; only meaningful on its
    box.
    """
    return SeparableHamiltonian(
        kinetic=_half_square,
        potential=lambda x: coupling * jnp.sum(x**4),
        dim=dim,
        lipschitz_box=_box(dim, x_extent, p_extent),
        name="anharmonic",
    )


def quartic_window(
    dim: int = 1,
    strength: float = 1.0,
    width: float = 2.0,
    x_extent: float = 8.0,
    p_extent: float = 8.0,
) -> SeparableHamiltonian:
    """`H = |p|²/2 + s Σ_a x_a⁴ / (1 + (x_a/w)⁴)`: quartic near the origin, flat far
    away, so the Hessian is bounded and `Λ_H` is tuned by `strength`.
    """
    return SeparableHamiltonian(
        kinetic=_half_square,
        potential=lambda x: strength * jnp.sum(x**4 / (1 + (x / width) ** 4)),
        dim=dim,
        lipschitz_box=_box(dim, x_extent, p_extent),
        name="quartic-window",
    )


def nonseparable_example(
    coupling: float = 0.2, x_extent: float = 8.0, p_extent: float = 8.0
) -> GeneralSymbolHamiltonian:
    """`H = p²/2 + cos x + c sin(x) p / (1 + p²)` for `D = 1`. Every derivative of
    order two or more is bounded.
    """

    def symbol(alpha):
        x, p = alpha[0], alpha[1]
        return 0.5 * p**2 + jnp.cos(x) + coupling * jnp.sin(x) * p / (1 + p**2)

    return GeneralSymbolHamiltonian(
        symbol=symbol,
        dim=1,
        lipschitz_box=_box(1, x_extent, p_extent),
        name="nonseparable",
    )


_MODELS = {
    "harmonic": harmonic_oscillator,
    "pendulum": pendulum,
    "free": free_particle,
    "linear": linear_potential,
    "anharmonic": anharmonic,
    "quartic-window": quartic_window,
    "nonseparable": nonseparable_example,
}


def model_names() -> tuple[str, ...]:
    return tuple(_MODELS)


def model_from_name(name: str, dim: int = 1, **params) -> AbstractHamiltonian:
    """Builds one of the canonical models by name. `params` are forwarded to the
    factory (e.g. `omega`, `force`, `x_extent`).
    """
    try:
        factory = _MODELS[name]
    except KeyError as e:
        raise ValueError(
            f"Unknown model '{name}'. Available models: {', '.join(_MODELS)}."
        ) from e
    if factory is nonseparable_example:
        if dim != 1:
            raise ValueError("The non-separable example model is only defined for D=1.")
        return factory(**params)
    return factory(dim=dim, **params)


def harmonic_flow(alpha: PhasePoint, t: float, omega: float = 1.0) -> PhasePoint:
    """Closed-form flow of `harmonic_oscillator(omega=omega)`."""
    dim = alpha.shape[0] // 2
    x, p = alpha[:dim], alpha[dim:]
    c, s = math.cos(omega * t), math.sin(omega * t)
    return jnp.concatenate([c * x + s * p / omega, -omega * s * x + c * p])
