import dataclasses
import importlib.resources
import math
import os
import typing
from typing import Any, Optional, Union

import jax.numpy as jnp
import jax.random as jr
import yaml

from ._grid import make_grid, PhaseSpaceGrid
from ._hamiltonian import AbstractHamiltonian, model_from_name, model_names
from ._state import (
    cat_state,
    coherent_state,
    gaussian_mixture_atoms,
    mix_coherent,
    QuantumState,
    random_low_rank_state,
)


OPERATIONS = ("egorov", "meanfield", "localization", "local_unitary", "operator_egorov")
INITIAL_KINDS = ("coherent", "cat", "coherent_mixture", "random_low_rank")
OBSERVABLES = ("sin", "cos", "x", "p", "cos_cos")

_PathLike = Union[str, "os.PathLike[str]"]


class ScenarioError(ValueError):
    """A malformed scenario. The message carries the file, line and key path."""


#
# Policies
#


@dataclasses.dataclass(frozen=True)
class GridPolicy:
    """How the grid is sized for each `ℏ`.

    The box is `[−x_extent − margin √ℏ, x_extent + margin √ℏ]` on every axis. Unless
    `n_x` is fixed, the number of points is the smallest power of two whose Nyquist
    momentum `π ℏ / dx` reaches `p_extent + margin √ℏ`, clipped to
    `[n_x_min, n_x_max]`.
    """

    x_extent: float = 4.0
    p_extent: float = 4.0
    margin: float = 8.0
    n_x: Optional[int] = None
    n_x_min: int = 64
    n_x_max: int = 2048

    def make_grid(self, dim: int, hbar: float) -> PhaseSpaceGrid:
        half = self.x_extent + self.margin * math.sqrt(hbar)
        if self.n_x is None:
            p_max = self.p_extent + self.margin * math.sqrt(hbar)
            needed = 2 * half * p_max / (math.pi * hbar)
            n_x = 2 ** max(4, math.ceil(math.log2(max(needed, 1.0))))
            n_x = min(max(n_x, self.n_x_min), self.n_x_max)
        else:
            n_x = self.n_x
        return make_grid(dim, hbar, -half, half, n_x)


@dataclasses.dataclass(frozen=True)
class SolverPolicy:
    """Solver choices for the sweep.

    - `quantum`: `"auto"`, `"split_step"` or `"dense"`.
    - `classical`: `"auto"`, `"leapfrog"` or `"implicit_midpoint"`.
    - `classical_dt`: initial step of the guarded classical flow.
    - `transport`: `"auto"`, `"exact"` or `"entropic"`.
    - `max_atoms`: supports are thinned to at most this many atoms before transport.
    - `prune_threshold`: atoms lighter than this are pruned before thinning.
    - `husimi_spacing`: centre-lattice spacing in units of `√ℏ`.
    """

    quantum: str = "auto"
    classical: str = "auto"
    classical_dt: float = 1e-3
    transport: str = "auto"
    max_atoms: int = 2000
    prune_threshold: float = 1e-9
    husimi_spacing: float = 0.25

    def __post_init__(self):
        if self.quantum not in ("auto", "split_step", "dense"):
            raise ValueError(f"Unknown quantum solver '{self.quantum}'.")
        if self.classical not in ("auto", "leapfrog", "implicit_midpoint"):
            raise ValueError(f"Unknown classical solver '{self.classical}'.")
        if self.transport not in ("auto", "exact", "entropic"):
            raise ValueError(f"Unknown transport solver '{self.transport}'.")
        if not 0 < self.husimi_spacing <= 0.5:
            raise ValueError("`husimi_spacing` must lie in (0, 0.5].")


@dataclasses.dataclass(frozen=True)
class ModelSpec:
    name: str
    dim: int = 1
    params: dict = dataclasses.field(default_factory=dict)

    def build(self) -> AbstractHamiltonian:
        return model_from_name(self.name, self.dim, **self.params)


@dataclasses.dataclass(frozen=True)
class InitialState:
    """A recipe for the initial state.

    - `coherent`: `|center⟩`.
    - `cat`: `(|α⟩ + |−α⟩)/norm` with `α = (separation/2, 0, ...)`.
    - `coherent_mixture`: Gauss–Hermite quadrature (`order` nodes per axis) of the
        Gaussian density of mean `center` and per-axis variance `variance`.
    - `random_low_rank`: [`egorax.random_low_rank_state`][] with `seed`, `rank` and
        `spread` about `center`.
    """

    kind: str
    center: tuple[float, ...] = ()
    separation: float = 2.0
    variance: float = 0.1
    order: int = 3
    seed: int = 0
    rank: int = 2
    spread: float = 1.0

    def build(self, grid: PhaseSpaceGrid) -> QuantumState:
        center = jnp.asarray(self.center or (0.0,) * (2 * grid.dim), dtype=float)
        if self.kind == "coherent":
            return coherent_state(grid, center)
        if self.kind == "cat":
            alpha = jnp.zeros(2 * grid.dim).at[0].set(self.separation / 2)
            return cat_state(grid, alpha)
        if self.kind == "coherent_mixture":
            return mix_coherent(grid, self.mixture_atoms(grid.dim))
        if self.kind == "random_low_rank":
            return random_low_rank_state(
                grid, jr.PRNGKey(self.seed), self.rank, center, self.spread
            )
        raise ValueError(f"Unknown initial state kind '{self.kind}'.")

    def mixture_atoms(self, dim: int) -> list[tuple[Any, float]]:
        center = jnp.asarray(self.center or (0.0,) * (2 * dim), dtype=float)
        locations, weights = gaussian_mixture_atoms(center, self.variance, self.order)
        return [(loc, float(w)) for loc, w in zip(locations, weights)]


@dataclasses.dataclass(frozen=True)
class Scenario:
    """A sweep: which operation to run, on which model and initial state, over which
    `ℏ`, `T` and `p` values.
    """

    name: str
    operation: str
    model: ModelSpec
    initial: InitialState
    T_list: tuple[float, ...] = (0.5, 1.0, 2.0)
    hbar_list: tuple[float, ...] = (0.2, 0.1, 0.05, 0.025, 0.0125)
    p_list: tuple[float, ...] = (2.0,)
    grid: GridPolicy = GridPolicy()
    solver: SolverPolicy = SolverPolicy()
    k: int = 2
    alpha_factors: tuple[float, ...] = (1.0, 2.0, 4.0)
    observable: str = "sin"
    triangle: bool = False
    slack: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        if self.operation not in OPERATIONS:
            raise ValueError(
                f"Unknown operation '{self.operation}'; expected one of {OPERATIONS}."
            )
        if self.initial.kind not in INITIAL_KINDS:
            raise ValueError(f"Unknown initial state kind '{self.initial.kind}'.")
        if self.model.name not in model_names():
            raise ValueError(f"Unknown model '{self.model.name}'.")
        if not self.hbar_list or any(h <= 0 for h in self.hbar_list):
            raise ValueError("`hbar_list` must hold positive values.")
        if not self.T_list or any(t < 0 for t in self.T_list):
            raise ValueError("`T_list` must hold nonnegative values.")
        if any(p not in (1.0, 2.0, 4.0) for p in self.p_list):
            raise ValueError("`p_list` values must be among 1, 2 and 4.")
        if not 0 <= self.k <= 4:
            raise ValueError("`k` must lie between 0 and 4.")
        if self.observable not in OBSERVABLES:
            raise ValueError(f"Unknown observable '{self.observable}'.")

    def with_overrides(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)


@dataclasses.dataclass(frozen=True)
class RunManifest:
    """Everything `egorax run` needs besides the scenario contents."""

    scenario_path: str
    output_dir: str
    seed: Optional[int] = None
    jobs: int = 1
    solver: Optional[str] = None
    preflight_only: bool = False


#
# Parsing
#


_SECTIONS = {
    "model": ModelSpec,
    "initial": InitialState,
    "grid": GridPolicy,
    "solver": SolverPolicy,
}
_TUPLE_KEYS = ("T_list", "hbar_list", "p_list", "alpha_factors", "center")
_REQUIRED = {
    Scenario: ("name", "operation", "model", "initial"),
    ModelSpec: ("name",),
    InitialState: ("kind",),
}


def _line_index(node: yaml.Node, path: tuple = ()) -> dict[tuple, int]:
    lines = {path: node.start_mark.line + 1}
    if isinstance(node, yaml.MappingNode):
        for key, value in node.value:
            lines.update(_line_index(value, path + (key.value,)))
            lines[path + (key.value,)] = key.start_mark.line + 1
    elif isinstance(node, yaml.SequenceNode):
        for i, value in enumerate(node.value):
            lines.update(_line_index(value, path + (i,)))
    return lines


class _Context:
    def __init__(self, source: str, lines: dict[tuple, int]):
        self.source = source
        self.lines = lines

    def error(self, path: tuple, message: str) -> ScenarioError:
        line = self.lines.get(path)
        while line is None and path:
            path = path[:-1]
            line = self.lines.get(path)
        key = ".".join(str(p) for p in path) or "<root>"
        return ScenarioError(f"{self.source}:{line}: {key}: {message}")


def _build(cls, payload: Any, path: tuple, ctx: _Context):
    if not isinstance(payload, dict):
        raise ctx.error(path, f"expected a mapping, got {type(payload).__name__}.")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = [k for k in payload if k not in fields]
    if unknown:
        raise ctx.error(
            path + (unknown[0],),
            f"unknown key '{unknown[0]}'; allowed keys are {sorted(fields)}.",
        )
    missing = [k for k in _REQUIRED.get(cls, ()) if k not in payload]
    if missing:
        raise ctx.error(path, f"missing required key '{missing[0]}'.")
    kwargs = {}
    for key, value in payload.items():
        if key in _SECTIONS and cls is Scenario:
            value = _build(_SECTIONS[key], value, path + (key,), ctx)
        elif key in _TUPLE_KEYS:
            if not isinstance(value, list):
                raise ctx.error(path + (key,), "expected a list of numbers.")
            value = tuple(_number(v, path + (key, i), ctx) for i, v in enumerate(value))
        elif key == "params":
            if not isinstance(value, dict):
                raise ctx.error(path + (key,), "expected a mapping.")
        else:
            value = _scalar(fields[key], value, path + (key,), ctx)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        raise ctx.error(path, str(e)) from e


def _number(value: Any, path: tuple, ctx: _Context) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ctx.error(path, f"expected a number, got {value!r}.")
    return float(value)


def _scalar(field: dataclasses.Field, value: Any, path: tuple, ctx: _Context) -> Any:
    kind = field.type
    if typing.get_origin(kind) is Union:
        if value is None:
            return None
        kind = next(t for t in typing.get_args(kind) if t is not type(None))
    if kind is float:
        return _number(value, path, ctx)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ctx.error(path, f"expected an integer, got {value!r}.")
        return value
    if kind is bool:
        if not isinstance(value, bool):
            raise ctx.error(path, f"expected true or false, got {value!r}.")
        return value
    if kind is str:
        if not isinstance(value, str):
            raise ctx.error(path, f"expected a string, got {value!r}.")
        return value
    return value


def parse_scenario(text: str, source: str = "<string>") -> Scenario:
    """Parses a YAML scenario, rejecting unknown keys.

    **Raises:**

    [`egorax.ScenarioError`][] (a `ValueError`) whose message reads
    `source:line: key.path: problem`.
    """
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        payload = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        line = "?" if mark is None else mark.line + 1
        raise ScenarioError(f"{source}:{line}: invalid YAML: {e}") from e
    if node is None:
        raise ScenarioError(f"{source}:1: <root>: empty scenario.")
    return _build(Scenario, payload, (), _Context(source, _line_index(node)))


def bundled_scenarios() -> tuple[str, ...]:
    files = importlib.resources.files("egorax") / "scenarios"
    return tuple(
        sorted(
            f.name[: -len(".yaml")] for f in files.iterdir() if f.name.endswith(".yaml")
        )
    )


def load_scenario(name_or_path: _PathLike) -> Scenario:
    """Loads a scenario from a file, or by name from the bundled scenarios."""
    path = os.fspath(name_or_path)
    if os.path.exists(path):
        with open(path) as f:
            return parse_scenario(f.read(), source=path)
    if path in bundled_scenarios():
        resource = importlib.resources.files("egorax") / "scenarios" / f"{path}.yaml"
        return parse_scenario(resource.read_text(), source=f"{path}.yaml")
    raise ScenarioError(
        f"{path}: no such file, and not a bundled scenario "
        f"({', '.join(bundled_scenarios())})."
    )


def scenario_to_dict(scenario: Scenario) -> dict:
    return dataclasses.asdict(scenario)

