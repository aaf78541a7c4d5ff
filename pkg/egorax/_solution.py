import csv
import os
from typing import Union

import equinox as eqx
import jax.numpy as jnp
import numpy as np
import optimistix as optx
from jaxtyping import Array, Bool, Float

from ._custom_types import PhaseCloud


class RESULTS(optx.RESULTS):  # pyright: ignore
    successful = ""
    boundary_leak = (
        "Probability mass reached the edge of the position box or the momentum Nyquist "
        "band. Enlarge the box or increase `n_x`."
    )
    box_exit = "A classical trajectory left the Hamiltonian's `lipschitz_box`."
    energy_drift = (
        "The energy drift of the classical flow stayed above tolerance after the "
        "maximum number of step refinements."
    )
    implicit_solve_failed = "The implicit midpoint equation failed to converge."
    power_iteration_failed = (
        "The power iteration for the operator norm did not converge. Try increasing "
        "`max_steps`."
    )
    coverage_violation = (
        "The centre lattice does not cover the support of the state: too much Husimi "
        "mass falls outside of it."
    )
    branch_cap_exceeded = "The mixture would need more than 4096 branches."
    transport_failed = "The optimal transport solver did not reach optimality."


def is_successful(result: RESULTS) -> Bool[Array, ""]:
    return result == RESULTS.successful


class EgoraxError(RuntimeError):
    """Raised by host-side operations that fail for a numerical (rather than an input)
    reason. The `result` attribute identifies the cause as a member of
    [`egorax.RESULTS`][].
    """

    def __init__(self, result: RESULTS, detail: str):
        super().__init__(detail)
        self.result = result
        self.detail = detail


def raise_if_failed(result: RESULTS, detail: str) -> None:
    if not bool(is_successful(result)):
        raise EgoraxError(result, detail)


class FlowSolution(eqx.Module):
    """A trajectory of a classical Hamiltonian flow.

    **Attributes:**

    - `ts`: the times at which the trajectory was saved.
    - `alphas`: the phase-space points at each time in `ts`, ordered as positions then
        momenta.
    - `energies`: the value of the Hamiltonian at each saved point.
    - `result`: a [`egorax.RESULTS`][] member saying whether the solve was successful.
    """

    ts: Float[Array, " times"]
    alphas: PhaseCloud
    energies: Float[Array, " times"]
    result: RESULTS

    @property
    def energy_drift(self) -> float:
        return float(jnp.max(jnp.abs(self.energies - self.energies[0])))

    def to_csv(self, path: Union[str, "os.PathLike[str]"]) -> None:
        """Writes the columns `(t, x_1, ..., p_1, ..., H)` to `path`."""
        dim = self.alphas.shape[1] // 2
        header = (
            ["t"]
            + [f"x{i + 1}" for i in range(dim)]
            + [f"p{i + 1}" for i in range(dim)]
            + ["H"]
        )
        table = np.concatenate(
            [
                np.asarray(self.ts)[:, None],
                np.asarray(self.alphas),
                np.asarray(self.energies)[:, None],
            ],
            axis=1,
        )
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(header)
            for row in table:
                writer.writerow([repr(float(v)) for v in row])


_FAILURES = (
    "boundary_leak",
    "box_exit",
    "energy_drift",
    "implicit_solve_failed",
    "power_iteration_failed",
    "coverage_violation",
    "branch_cap_exceeded",
    "transport_failed",
)


def result_name(result: RESULTS) -> str:
    """The member name of `result`, e.g. `"boundary_leak"`."""
    for name in _FAILURES:
        if bool(result == getattr(RESULTS, name)):
            return name
    return "successful"
