import csv
import json
import os
import struct
from typing import Union

import jax.numpy as jnp
import numpy as np

from ._grid import PhaseSpaceGrid
from ._measure import CenterLattice, PhaseSpaceMeasure
from ._report import write_json
from ._state import make_state, QuantumState
from ._transport import (
    measure_from_dict,
    measure_to_dict,
    problem_from_dict,
    TransportProblem,
    TransportResult,
)


FORMAT_VERSION = 1

_STATE_MAGIC = b"EGRXSTAT"
_MEASURE_MAGIC = b"EGRXMEAS"
# magic, format version, header length
_PREAMBLE = struct.Struct("<8sII")
_FLOAT = np.dtype("<f8")
_COMPLEX = np.dtype("<c16")

_PathLike = Union[str, "os.PathLike[str]"]


def _write(path: _PathLike, magic: bytes, header: dict, arrays: list[np.ndarray]):
    encoded = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_PREAMBLE.pack(magic, FORMAT_VERSION, len(encoded)))
        f.write(encoded)
        for array in arrays:
            f.write(np.ascontiguousarray(array).tobytes())


def _read(path: _PathLike, magic: bytes) -> tuple[dict, bytes]:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < _PREAMBLE.size:
        raise ValueError(f"{path}: file too short to be an egorax file.")
    found, version, length = _PREAMBLE.unpack_from(data)
    if found != magic:
        raise ValueError(f"{path}: expected magic {magic!r}, found {found!r}.")
    _check_version(path, version)
    start = _PREAMBLE.size
    header = json.loads(data[start : start + length].decode("utf-8"))
    return header, data[start + length :]


def _check_version(path: _PathLike, version) -> None:
    if version != FORMAT_VERSION:
        raise ValueError(
            f"{path}: format version {version} does not match the supported version "
            f"{FORMAT_VERSION}."
        )


def _take(payload: bytes, offset: int, dtype: np.dtype, count: int):
    end = offset + dtype.itemsize * count
    if end > len(payload):
        raise ValueError("Truncated payload.")
    return np.frombuffer(payload[offset:end], dtype=dtype), end


#
# States
#


def save_state(path: _PathLike, state: QuantumState) -> None:
    """Writes a state as a versioned binary file: a header with `D`, `ℏ` and the grid,
    then the branch weights and the wavefunctions as little-endian float64.
    """
    grid = state.grid
    header = {
        "kind": "state",
        "dim": grid.dim,
        "hbar": grid.hbar,
        "x_min": list(grid.x_min),
        "x_max": list(grid.x_max),
        "n_x": grid.n_x,
        "n_branches": state.n_branches,
    }
    weights = np.asarray(state.weights, dtype=_FLOAT)
    psis = np.asarray(state.psis, dtype=_COMPLEX)
    _write(path, _STATE_MAGIC, header, [weights, psis])


def load_state(path: _PathLike) -> QuantumState:
    header, payload = _read(path, _STATE_MAGIC)
    grid = PhaseSpaceGrid(
        dim=int(header["dim"]),
        hbar=float(header["hbar"]),
        x_min=tuple(float(v) for v in header["x_min"]),
        x_max=tuple(float(v) for v in header["x_max"]),
        n_x=int(header["n_x"]),
    )
    n_branches = int(header["n_branches"])
    weights, offset = _take(payload, 0, _FLOAT, n_branches)
    size = n_branches * grid.n_x**grid.dim
    psis, _ = _take(payload, offset, _COMPLEX, size)
    psis = psis.reshape((n_branches,) + grid.shape)
    return make_state(grid, jnp.asarray(weights), jnp.asarray(psis))


#
# Measures
#


def save_measure(path: _PathLike, measure: PhaseSpaceMeasure) -> None:
    """Writes a measure as a versioned columnar binary file: one float64 column per
    phase-space coordinate, then the masses.
    """
    lattice = measure.lattice
    header = {
        "kind": "measure",
        "dim": measure.dim,
        "n_atoms": measure.n_atoms,
        "signed": measure.signed,
        "dropped_mass": measure.dropped_mass,
        "certificate": measure.certificate,
        "lattice": None
        if lattice is None
        else {
            "origin": list(lattice.origin),
            "spacing": list(lattice.spacing),
            "shape": list(lattice.shape),
        },
    }
    locations = np.asarray(measure.locations, dtype=_FLOAT)
    columns = [locations[:, a] for a in range(locations.shape[1])]
    _write(path, _MEASURE_MAGIC, header, columns + [np.asarray(measure.masses, _FLOAT)])


def load_measure(path: _PathLike) -> PhaseSpaceMeasure:
    header, payload = _read(path, _MEASURE_MAGIC)
    n_atoms = int(header["n_atoms"])
    columns = []
    offset = 0
    for _ in range(2 * int(header["dim"])):
        column, offset = _take(payload, offset, _FLOAT, n_atoms)
        columns.append(column)
    masses, _ = _take(payload, offset, _FLOAT, n_atoms)
    lattice = header["lattice"]
    if lattice is not None:
        lattice = CenterLattice(
            origin=tuple(float(v) for v in lattice["origin"]),
            spacing=tuple(float(v) for v in lattice["spacing"]),
            shape=tuple(int(v) for v in lattice["shape"]),
        )
    return PhaseSpaceMeasure(
        jnp.asarray(np.stack(columns, axis=-1)),
        jnp.asarray(masses),
        lattice,
        signed=bool(header["signed"]),
        dropped_mass=float(header["dropped_mass"]),
        certificate=float(header["certificate"]),
    )


def save_measure_json(path: _PathLike, measure: PhaseSpaceMeasure) -> None:
    write_json(path, {"format_version": FORMAT_VERSION, **measure_to_dict(measure)})


def read_measure(path: _PathLike) -> PhaseSpaceMeasure:
    """Loads a measure from a `.json` file (atoms as lists) or a binary measure file."""
    if os.fspath(path).endswith(".json"):
        with open(path) as f:
            payload = json.load(f)
        _check_version(path, payload.get("format_version", FORMAT_VERSION))
        return measure_from_dict(payload)
    return load_measure(path)


def measure_to_csv(path: _PathLike, measure: PhaseSpaceMeasure) -> None:
    dim = measure.dim
    names = [f"x{a + 1}" for a in range(dim)] + [f"p{a + 1}" for a in range(dim)]
    locations = np.asarray(measure.locations)
    masses = np.asarray(measure.masses)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(names + ["mass"])
        for point, mass in zip(locations, masses):
            writer.writerow([repr(float(v)) for v in point] + [repr(float(mass))])


#
# Transport instances
#


def save_problem(path: _PathLike, problem: TransportProblem) -> None:
    write_json(path, {"format_version": FORMAT_VERSION, **problem.to_dict()})


def load_problem(path: _PathLike) -> TransportProblem:
    with open(path) as f:
        payload = json.load(f)
    _check_version(path, payload.get("format_version"))
    return problem_from_dict(payload)


def save_result(
    path: _PathLike, result: TransportResult, include_plan: bool = False
) -> None:
    write_json(
        path,
        {"format_version": FORMAT_VERSION, **result.to_dict(include_plan=include_plan)},
    )
