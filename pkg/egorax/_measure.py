import math
from collections.abc import Sequence
from typing import Optional, Union

import equinox as eqx
import jax.numpy as jnp
import numpy as np
from jaxtyping import Array, ArrayLike, Float

from ._custom_types import PhaseCloud


class CenterLattice(eqx.Module):
    """A tensor-product lattice of phase-space centres, one uniform axis per
    phase-space coordinate.

    **Attributes:**

    - `origin`: the first point of each axis, ordered as positions then momenta.
    - `spacing`: the spacing `h_α` of each axis.
    - `shape`: the number of points of each axis.
    """

    origin: tuple[float, ...] = eqx.field(static=True)
    spacing: tuple[float, ...] = eqx.field(static=True)
    shape: tuple[int, ...] = eqx.field(static=True)

    def __check_init__(self):
        if not len(self.origin) == len(self.spacing) == len(self.shape):
            raise ValueError("`origin`, `spacing` and `shape` must have equal lengths.")
        if len(self.origin) not in (2, 4):
            raise ValueError("A centre lattice lives on a 2- or 4-dimensional space.")
        if any(h <= 0 for h in self.spacing):
            raise ValueError("Lattice spacings must be positive.")
        if any(n < 1 for n in self.shape):
            raise ValueError("Every lattice axis needs at least one point.")

    @property
    def dim(self) -> int:
        return len(self.origin) // 2

    @property
    def size(self) -> int:
        return math.prod(self.shape)

    @property
    def cell_volume(self) -> float:
        return math.prod(self.spacing)

    def axis(self, a: int) -> Float[Array, " n"]:
        return self.origin[a] + self.spacing[a] * jnp.arange(self.shape[a])

    def centers(self) -> PhaseCloud:
        """All lattice points in C order, shape `(size, 2D)`."""
        axes = [self.axis(a) for a in range(2 * self.dim)]
        mesh = jnp.stack(jnp.meshgrid(*axes, indexing="ij"), axis=-1)
        return mesh.reshape(-1, 2 * self.dim)

    def check_resolution(self, hbar: float) -> None:
        """Raises `ValueError` unless every spacing is at most `√ℏ / 2`."""
        limit = math.sqrt(hbar) / 2
        if max(self.spacing) > limit * (1 + 1e-12):
            raise ValueError(
                f"Centre lattice spacing {max(self.spacing)} exceeds sqrt(hbar)/2 = "
                f"{limit}."
            )

    def translated(self, offset: ArrayLike) -> "CenterLattice":
        offset = np.asarray(offset, dtype=float).reshape(-1)
        return CenterLattice(
            origin=tuple(float(o + v) for o, v in zip(self.origin, offset)),
            spacing=self.spacing,
            shape=self.shape,
        )


def make_lattice(
    lower: Sequence[float], spacing: Union[float, Sequence[float]], shape: Sequence[int]
) -> CenterLattice:
    n_axes = len(lower)
    if isinstance(spacing, (int, float)):
        spacing = (float(spacing),) * n_axes
    return CenterLattice(
        origin=tuple(float(v) for v in lower),
        spacing=tuple(float(v) for v in spacing),
        shape=tuple(int(v) for v in shape),
    )


class PhaseSpaceMeasure(eqx.Module):
    """A discrete measure on phase space: atoms with masses.

    Grid-supported measures (Husimi and Wigner functions) carry the
    [`egorax.CenterLattice`][] their atoms sit on, in C order, with `mass = value ×
    cell volume`. Particle measures (e.g. pushforwards) have `lattice=None`.

    **Attributes:**

    - `locations`: the atoms, shape `(atoms, 2D)`.
    - `masses`: the mass of each atom.
    - `lattice`: the lattice of a grid-supported measure, else `None`.
    - `signed`: whether negative masses are allowed. Wigner functions are signed;
        transport refuses signed measures.
    - `dropped_mass`: mass removed by pruning or lost outside of the lattice, carried
        along for error certificates.
    - `certificate`: a bound on the Wasserstein distance between this measure and the
        one it was derived from by support thinning.
    """

    locations: PhaseCloud
    masses: Float[Array, " atoms"]
    lattice: Optional[CenterLattice] = None
    signed: bool = eqx.field(static=True, default=False)
    dropped_mass: float = eqx.field(static=True, default=0.0)
    certificate: float = eqx.field(static=True, default=0.0)

    def __check_init__(self):
        if self.locations.ndim != 2 or self.locations.shape[1] not in (2, 4):
            raise ValueError(
                f"`locations` must have shape (atoms, 2D), got {self.locations.shape}."
            )
        if self.masses.shape != self.locations.shape[:1]:
            raise ValueError("Need exactly one mass per atom.")
        if self.lattice is not None and self.lattice.size != self.masses.shape[0]:
            raise ValueError("A grid-supported measure needs one atom per centre.")

    @property
    def dim(self) -> int:
        return self.locations.shape[1] // 2

    @property
    def n_atoms(self) -> int:
        return self.masses.shape[0]

    @property
    def is_grid(self) -> bool:
        return self.lattice is not None

    def total_mass(self) -> float:
        return float(jnp.sum(self.masses))

    def density(self) -> Float[Array, "..."]:
        """The values of a grid-supported measure, reshaped to the lattice."""
        if self.lattice is None:
            raise ValueError("Only grid-supported measures have a density.")
        return (self.masses / self.lattice.cell_volume).reshape(self.lattice.shape)

    def mean(self) -> Float[Array, " phase"]:
        return jnp.sum(self.masses[:, None] * self.locations, axis=0) / jnp.sum(
            self.masses
        )

    def translated(self, offset: ArrayLike) -> "PhaseSpaceMeasure":
        """The pushforward under `z ↦ z + offset`."""
        offset = jnp.asarray(offset, dtype=float).reshape(-1)
        lattice = None if self.lattice is None else self.lattice.translated(offset)
        return PhaseSpaceMeasure(
            self.locations + offset,
            self.masses,
            lattice,
            signed=self.signed,
            dropped_mass=self.dropped_mass,
            certificate=self.certificate,
        )

    def as_particles(self) -> "PhaseSpaceMeasure":
        return PhaseSpaceMeasure(
            self.locations,
            self.masses,
            None,
            signed=self.signed,
            dropped_mass=self.dropped_mass,
            certificate=self.certificate,
        )

    def normalized(self) -> "PhaseSpaceMeasure":
        """Rescales the masses to sum to one."""
        return PhaseSpaceMeasure(
            self.locations,
            self.masses / jnp.sum(self.masses),
            self.lattice,
            signed=self.signed,
            dropped_mass=self.dropped_mass,
            certificate=self.certificate,
        )

    def check_probability(self, atol: float = 1e-8) -> None:
        """Raises `ValueError` unless the measure is nonnegative with unit mass."""
        if self.signed or bool(jnp.any(self.masses < 0)):
            raise ValueError("Expected a nonnegative measure, got a signed one.")
        total = self.total_mass()
        if abs(total - 1) > atol:
            raise ValueError(f"Expected unit total mass, got {total}.")


def particle_measure(
    locations: ArrayLike, masses: Optional[ArrayLike] = None
) -> PhaseSpaceMeasure:
    """A particle measure; equal masses summing to one if `masses` is omitted."""
    locations = jnp.asarray(locations, dtype=float)
    if locations.ndim == 1:
        locations = locations[None]
    if masses is None:
        masses = jnp.full(locations.shape[0], 1 / locations.shape[0])
    masses = jnp.asarray(masses, dtype=float).reshape(-1)
    if bool(jnp.any(masses < 0)):
        raise ValueError("Particle masses must be nonnegative.")
    return PhaseSpaceMeasure(locations, masses)


def grid_measure(
    lattice: CenterLattice, values: ArrayLike, signed: bool = False
) -> PhaseSpaceMeasure:
    """A grid-supported measure from its values (densities) on the lattice."""
    values = jnp.asarray(values, dtype=float).reshape(-1)
    if not signed and bool(jnp.any(values < 0)):
        raise ValueError("Negative values in an unsigned measure.")
    return PhaseSpaceMeasure(
        lattice.centers(), values * lattice.cell_volume, lattice, signed=signed
    )


def dirac(alpha: ArrayLike) -> PhaseSpaceMeasure:
    return particle_measure(jnp.asarray(alpha, dtype=float)[None], jnp.ones(1))
