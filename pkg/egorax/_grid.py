import math
from collections.abc import Sequence
from typing import Union

import equinox as eqx
import jax.numpy as jnp
import numpy as np
from jaxtyping import Array, ArrayLike, Float

from ._custom_types import PhasePoint


class PhaseSpaceGrid(eqx.Module):
    """A uniform periodic discretisation of position space, together with its discrete
    Fourier dual in momentum. Together they discretise the phase space
    $\\mathbb{R}^{2D}$ on which every other object in this package lives.

    The position axis `a` has points `x_min[a] + j * dx[a]` for `j = 0, ..., n_x - 1`.
    The momentum axis has spacing `2π ℏ / (x_max[a] - x_min[a])` and is stored in FFT
    order.
    """

    dim: int = eqx.field(static=True)
    hbar: float = eqx.field(static=True)
    x_min: tuple[float, ...] = eqx.field(static=True)
    x_max: tuple[float, ...] = eqx.field(static=True)
    n_x: int = eqx.field(static=True)

    def __check_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"`dim` must be 1 or 2, got {self.dim}.")
        if not self.hbar > 0:
            raise ValueError(f"`hbar` must be positive, got {self.hbar}.")
        if len(self.x_min) != self.dim or len(self.x_max) != self.dim:
            raise ValueError("`x_min` and `x_max` must have one entry per axis.")
        for lo, hi in zip(self.x_min, self.x_max):
            if not hi > lo:
                raise ValueError(f"Degenerate box: x_max={hi} <= x_min={lo}.")
        if self.n_x < 16 or (self.n_x & (self.n_x - 1)) != 0:
            raise ValueError(f"`n_x` must be a power of two >= 16, got {self.n_x}.")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_x,) * self.dim

    @property
    def length(self) -> tuple[float, ...]:
        return tuple(hi - lo for lo, hi in zip(self.x_min, self.x_max))

    @property
    def dx(self) -> tuple[float, ...]:
        return tuple(length / self.n_x for length in self.length)

    @property
    def dp(self) -> tuple[float, ...]:
        return tuple(2 * math.pi * self.hbar / length for length in self.length)

    @property
    def cell_volume(self) -> float:
        return math.prod(self.dx)

    @property
    def momentum_limit(self) -> tuple[float, ...]:
        """The Nyquist momentum `π ℏ / dx` of each axis."""
        return tuple(math.pi * self.hbar / dx for dx in self.dx)

    @property
    def boundary_band(self) -> float:
        """Width of the band next to the box edges watched by the boundary monitor."""
        return 5 * math.sqrt(self.hbar)

    def x_axis(self, axis: int = 0) -> Float[Array, " n"]:
        return self.x_min[axis] + self.dx[axis] * jnp.arange(self.n_x)

    def p_axis(self, axis: int = 0) -> Float[Array, " n"]:
        """Momentum axis in FFT order."""
        return 2 * jnp.pi * self.hbar * jnp.fft.fftfreq(self.n_x, self.dx[axis])

    def positions(self) -> Float[Array, "..."]:
        """All position grid points, shape `(n_x,) * dim + (dim,)`."""
        axes = [self.x_axis(a) for a in range(self.dim)]
        return jnp.stack(jnp.meshgrid(*axes, indexing="ij"), axis=-1)

    def momenta(self) -> Float[Array, "..."]:
        """All momentum grid points in FFT order, shape `(n_x,) * dim + (dim,)`."""
        axes = [self.p_axis(a) for a in range(self.dim)]
        return jnp.stack(jnp.meshgrid(*axes, indexing="ij"), axis=-1)

    def phase_point(self, alpha: ArrayLike) -> PhasePoint:
        """Validates and converts `alpha` to a phase-space point of this grid."""
        alpha = jnp.asarray(alpha, dtype=float).reshape(-1)
        if alpha.shape != (2 * self.dim,):
            raise ValueError(
                f"A phase-space point for dim={self.dim} needs {2 * self.dim} "
                f"components, got shape {alpha.shape}."
            )
        if not bool(jnp.all(jnp.isfinite(alpha))):
            raise ValueError("Phase-space point has non-finite entries.")
        return alpha


PhaseSpaceGrid.__init__.__doc__ = """**Arguments:**

- `dim`: the spatial dimension `D`. Phase space is `2D`-dimensional.
- `hbar`: the semiclassical parameter.
- `x_min`, `x_max`: the box edges, one per spatial axis.
- `n_x`: the number of points per spatial axis. Must be a power of two, at least 16.
"""


def _per_axis(value: Union[float, Sequence[float]], dim: int) -> tuple[float, ...]:
    if isinstance(value, (int, float, np.floating, np.integer)):
        return (float(value),) * dim
    out = tuple(float(v) for v in value)
    if len(out) != dim:
        raise ValueError(f"Expected {dim} box edges, got {len(out)}.")
    return out


def make_grid(
    dim: int,
    hbar: float,
    x_min: Union[float, Sequence[float]],
    x_max: Union[float, Sequence[float]],
    n_x: int,
) -> PhaseSpaceGrid:
    """Builds a [`egorax.PhaseSpaceGrid`][], accepting either a scalar or a per-axis
    sequence for the box edges.

    **Arguments:**

    - `dim`: spatial dimension, 1 or 2.
    - `hbar`: semiclassical parameter, positive.
    - `x_min`, `x_max`: box edges.
    - `n_x`: points per axis, a power of two.

    **Returns:**

    The grid. Its momentum axis is the discrete Fourier dual of the position axis.
    """
    return PhaseSpaceGrid(
        dim=int(dim),
        hbar=float(hbar),
        x_min=_per_axis(x_min, dim),
        x_max=_per_axis(x_max, dim),
        n_x=int(n_x),
    )


def symplectic_form(alpha: ArrayLike, beta: ArrayLike) -> Float[Array, ""]:
    """ω(α, β) = α_x · β_p − α_p · β_x."""
    alpha = jnp.asarray(alpha)
    beta = jnp.asarray(beta)
    dim = alpha.shape[-1] // 2
    return jnp.sum(alpha[..., :dim] * beta[..., dim:], axis=-1) - jnp.sum(
        alpha[..., dim:] * beta[..., :dim], axis=-1
    )
