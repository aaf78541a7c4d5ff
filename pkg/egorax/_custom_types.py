from collections.abc import Callable
from typing import TYPE_CHECKING, Union
from typing_extensions import TypeAlias

import numpy as np
from jaxtyping import Array, ArrayLike, Complex, Float, Real


if TYPE_CHECKING:
    RealScalarLike = Union[float, int, Array, np.ndarray]
else:
    # Time steps may be traced inside `filter_jit`.
    RealScalarLike = Real[ArrayLike, ""]


# A point of phase space, ordered as (x_1, ..., x_D, p_1, ..., p_D).
PhasePoint: TypeAlias = Float[Array, " phase"]
PhaseCloud: TypeAlias = Float[Array, "atoms phase"]
# Wavefunction samples on the position grid, one axis per spatial dimension.
Wavefunction: TypeAlias = Complex[Array, "..."]
Branches: TypeAlias = Complex[Array, "branches ..."]
# Scalar functions of a single phase-space point (or of a single x / p vector).
Symbol: TypeAlias = Callable[[Float[Array, " _"]], Union[Float[Array, ""], Array]]
Box: TypeAlias = tuple[tuple[float, float], ...]
