import _thread
import dataclasses
import logging
import math
import threading
import time
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from typing import Optional

import jax
import jax.numpy as jnp
import numpy as np

from ._dynamics import (
    dense_propagator,
    evolve_operator,
    flow_lipschitz,
    flow_map,
    flow_point,
    propagate_quantum,
    pushforward,
)
from ._grid import PhaseSpaceGrid
from ._hamiltonian import AbstractHamiltonian, estimate_lipschitz, harmonic_flow
from ._measure import PhaseSpaceMeasure
from ._norms import (
    make_window,
    operator_norm,
    sobolev_norm,
    sobolev_shift_ratio,
    uncertainty_chain_check,
    windowed_operator_norm,
    z_norm,
)
from ._progress_meter import AbstractProgressMeter, NoProgressMeter
from ._report import Gate, SweepReport
from ._scenario import Scenario, SolverPolicy
from ._solution import EgoraxError, result_name, RESULTS
from ._solver import (
    AbstractClassicalSolver,
    AbstractQuantumSolver,
    DenseEigen,
    ImplicitMidpoint,
    Leapfrog,
    SplitStep,
)
from ._state import (
    check_boundary,
    coherent_state,
    phase_space_mean,
    QuantumState,
    translate,
)
from ._transforms import (
    covering_lattice,
    husimi,
    mollify_symbol,
    noising_channel,
    resolve_conventions,
    translation_operator,
    weyl_quantize,
)
from ._transport import (
    convexity_bound,
    gaussian_smoothing_radius,
    prune_support,
    thin_support,
    TransportProblem,
    TransportResult,
    wasserstein,
)


logger = logging.getLogger(__name__)

SLOPE_MINIMUM = 0.45
DEFAULT_SLACK = {
    "egorov": 0.10,
    "meanfield": 0.10,
    "localization": 0.05,
    "local_unitary": 0.10,
    "operator_egorov": 0.10,
}
DENSE_MAX_N_X = 1024
# Largest Husimi total variation between a propagated coherent state and its
# closed-form evolution.
ORACLE_TV_MAXIMUM = 1e-3


#
# Scaling fits
#


@dataclasses.dataclass(frozen=True)
class ScalingFit:
    """A least-squares fit `log y = slope · log x + intercept`, with a jackknife 95%
    confidence interval for the slope.
    """

    slope: float
    intercept: float
    ci_low: float
    ci_high: float
    n_points: int

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def fit_scaling(rows: Sequence[dict], x_key: str, y_key: str) -> ScalingFit:
    """Fits a power law `y ∝ x^slope` through `rows`.

    **Raises:**

    `ValueError` with fewer than 4 points, if `x` spans less than a decade, or for
    nonpositive values.
    """
    x = np.array([float(r[x_key]) for r in rows])
    y = np.array([float(r[y_key]) for r in rows])
    if x.shape[0] < 4:
        raise ValueError(f"Insufficient points for a scaling fit: {x.shape[0]} < 4.")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("A log-log fit needs positive values.")
    log_x, log_y = np.log(x), np.log(y)
    if log_x.max() - log_x.min() < math.log(10) - 1e-12:
        raise ValueError(
            f"Insufficient span for a scaling fit: `{x_key}` covers "
            f"{x.min():.4g}..{x.max():.4g}, less than a decade."
        )
    slope, intercept = np.polyfit(log_x, log_y, 1)
    n = x.shape[0]
    jackknife = np.array(
        [np.polyfit(np.delete(log_x, i), np.delete(log_y, i), 1)[0] for i in range(n)]
    )
    spread = math.sqrt((n - 1) / n * np.sum((jackknife - jackknife.mean()) ** 2))
    return ScalingFit(
        slope=float(slope),
        intercept=float(intercept),
        ci_low=float(slope - 1.96 * spread),
        ci_high=float(slope + 1.96 * spread),
        n_points=n,
    )


#
# Gates
#


def _ok(rows: Sequence[dict]) -> list[dict]:
    return [r for r in rows if r.get("status", "ok") == "ok"]


def _slope_gate(name: str, rows: Sequence[dict], y_key: str) -> Gate:
    try:
        fit = fit_scaling(_ok(rows), "hbar", y_key)
    except ValueError as e:
        return Gate(name, "skipped", {"reason": str(e)})
    verdict = "pass" if fit.slope >= SLOPE_MINIMUM else "fail"
    return Gate(name, verdict, {"fit": fit.to_dict(), "minimum": SLOPE_MINIMUM})


def _calibrated_gate(
    name: str,
    rows: Sequence[dict],
    y_key: str,
    scale: Callable[[dict], float],
    slack: float,
    coarsest: Callable[[dict], tuple],
    floor: float = 1e-10,
) -> Gate:
    """Fits `C = y / scale` at the coarsest row and checks
    `y <= C (1 + slack) scale + floor` on every other row.
    """
    rows = sorted(_ok(rows), key=coarsest)
    if len(rows) < 2:
        return Gate(name, "skipped", {"reason": "fewer than two rows"})
    constant = rows[0][y_key] / scale(rows[0])
    violations = [
        {"hbar": r["hbar"], "ratio": r[y_key] / scale(r)}
        for r in rows[1:]
        if r[y_key] > constant * (1 + slack) * scale(r) + floor
    ]
    return Gate(
        name,
        "fail" if violations else "pass",
        {"constant": constant, "slack": slack, "violations": violations},
    )


def _all_gate(name: str, rows: Sequence[dict], key: str, detail: dict) -> Gate:
    rows = [r for r in _ok(rows) if r.get(key) is not None]
    if not rows:
        return Gate(name, "skipped", {"reason": "no rows", **detail})
    failures = [
        {k: r[k] for k in ("hbar", "T", "p") if k in r} for r in rows if not r[key]
    ]
    return Gate(name, "fail" if failures else "pass", {"failures": failures, **detail})


#
# Shared plumbing
#


def _quantum_solver(policy: SolverPolicy) -> Optional[AbstractQuantumSolver]:
    return {"auto": None, "split_step": SplitStep(), "dense": DenseEigen()}[
        policy.quantum
    ]


def _classical_solver(policy: SolverPolicy) -> Optional[AbstractClassicalSolver]:
    solvers = {
        "auto": None,
        "leapfrog": Leapfrog(),
        "implicit_midpoint": ImplicitMidpoint(),
    }
    return solvers[policy.classical]


def _setup(
    scenario: Scenario, hbar: float
) -> tuple[PhaseSpaceGrid, AbstractHamiltonian, QuantumState]:
    grid = scenario.grid.make_grid(scenario.model.dim, hbar)
    return grid, scenario.model.build(), scenario.initial.build(grid)


def _husimi_of(
    state: QuantumState, policy: SolverPolicy, offset=None
) -> PhaseSpaceMeasure:
    spacing = policy.husimi_spacing * math.sqrt(state.grid.hbar)
    return husimi(state, covering_lattice(state, spacing=spacing, offset=offset))


def _prepare(measure: PhaseSpaceMeasure, policy: SolverPolicy, p: float):
    measure = prune_support(measure.normalized(), policy.prune_threshold)
    return thin_support(measure, policy.max_atoms, p)


def _push(
    measure: PhaseSpaceMeasure,
    model: AbstractHamiltonian,
    T: float,
    policy: SolverPolicy,
) -> PhaseSpaceMeasure:
    measure = prune_support(measure.normalized(), policy.prune_threshold)
    return pushforward(
        measure, model, T, dt=policy.classical_dt, solver=_classical_solver(policy)
    )


def _distance(
    mu: PhaseSpaceMeasure, nu: PhaseSpaceMeasure, p: float, policy: SolverPolicy
) -> TransportResult:
    return wasserstein(
        TransportProblem(_prepare(mu, policy, p), _prepare(nu, policy, p), p),
        solver=policy.transport,
    )


def _transport_columns(result: TransportResult, prefix: str = "") -> dict:
    return {
        f"{prefix}distance": result.distance,
        f"{prefix}bound_gap": result.bound_gap,
        f"{prefix}transport_solver": result.solver,
    }


def _slack(scenario: Scenario) -> float:
    if scenario.slack is None:
        return DEFAULT_SLACK[scenario.operation]
    return scenario.slack


_Job = tuple[str, Callable[[], list[dict]]]


def _run_jobs(
    jobs: list[_Job], workers: int, progress_meter: AbstractProgressMeter
) -> tuple[list[dict], dict]:
    """Runs independent jobs on a bounded thread pool. Rows come back in job order
    whatever the completion order. A numerical failure turns into a flagged row.
    """
    meter_state = progress_meter.init(len(jobs))

    def run(label: str, fn: Callable[[], list[dict]]):
        start = time.perf_counter()
        try:
            rows = fn()
        except EgoraxError as e:
            logger.warning("Job %s failed: %s", label, e)
            rows = [{"job": label, "status": result_name(e.result), "detail": e.detail}]
        elapsed = time.perf_counter() - start
        progress_meter.step(meter_state, label)
        return rows, elapsed

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        futures = [pool.submit(run, label, fn) for label, fn in jobs]
        outcomes = [f.result() for f in futures]
    progress_meter.close(meter_state)
    rows = []
    timings = {}
    for (label, _), (job_rows, elapsed) in zip(jobs, outcomes):
        for row in job_rows:
            row.setdefault("status", "ok")
            if row["status"] == "ok":
                logger.info(
                    "%s: %s",
                    label,
                    ", ".join(
                        f"{k}={row[k]:.4g}"
                        for k in ("distance", "bound_gap", "measured")
                        if isinstance(row.get(k), float)
                    ),
                )
        rows.extend(job_rows)
        timings[label] = elapsed
    return rows, timings


def _label(**values) -> str:
    return ", ".join(f"{k}={v:g}" for k, v in values.items())


#
# Preflight
#


def _check_reach(grid: PhaseSpaceGrid, points, context: str) -> None:
    band = grid.boundary_band
    dim = grid.dim
    points = np.asarray(points)
    x, p = points[:, :dim], points[:, dim:]
    lower = np.array(grid.x_min) + band
    upper = np.array(grid.x_max) - band
    p_max = np.array(grid.momentum_limit) - band
    if np.any(x < lower) or np.any(x > upper) or np.any(np.abs(p) > p_max):
        raise EgoraxError(
            RESULTS.boundary_leak,
            f"{context}: the flowed support reaches the boundary band of the grid "
            f"(box {grid.x_min}..{grid.x_max}, Nyquist momentum "
            f"{grid.momentum_limit}, band {band:.3g}). Enlarge the grid policy.",
        )


def _uses_dense(scenario: Scenario, model: AbstractHamiltonian) -> bool:
    return (
        scenario.operation in ("local_unitary", "operator_egorov")
        or scenario.solver.quantum == "dense"
        or (scenario.solver.quantum == "auto" and not model.is_separable)
    )


def preflight(scenario: Scenario) -> list[dict]:
    """Checks every `(ℏ, T)` pair of the scenario before any sweep work: the grid can
    be built and is small enough for dense operators where needed, the initial state
    fits the box, its Husimi function is covered, and the classical flow of its
    support stays clear of the boundary band.

    **Returns:**

    One summary dictionary per `ℏ`.

    **Raises:**

    `ValueError` for scenarios an operation cannot run, and [`egorax.EgoraxError`][]
    for boundary or coverage failures.
    """
    model = scenario.model.build()
    policy = scenario.solver
    if scenario.operation == "meanfield":
        if not model.is_separable:
            raise ValueError("The mean-field check needs a separable model.")
        if scenario.initial.kind != "coherent_mixture":
            raise ValueError("The mean-field check needs a coherent-mixture state.")
    summaries = []
    for hbar in scenario.hbar_list:
        grid = scenario.grid.make_grid(scenario.model.dim, hbar)
        if _uses_dense(scenario, model) and (grid.dim != 1 or grid.n_x > DENSE_MAX_N_X):
            raise ValueError(
                f"hbar={hbar}: dense operators need D=1 and n_x <= {DENSE_MAX_N_X}, "
                f"got D={grid.dim} and n_x={grid.n_x}."
            )
        summary = {"hbar": hbar, "n_x": grid.n_x, "x_min": grid.x_min[0]}
        if scenario.operation != "operator_egorov":
            context = f"preflight hbar={hbar}"
            try:
                state = scenario.initial.build(grid)
            except ValueError as e:
                raise EgoraxError(RESULTS.boundary_leak, f"{context}: {e}") from e
            check_boundary(state, context=context)
            support = prune_support(_husimi_of(state, policy).normalized(), 1e-6)
            summary["husimi_atoms"] = support.n_atoms
            for T in scenario.T_list:
                moved = _push(support, model, T, policy)
                _check_reach(grid, moved.locations, f"{context}, T={T:g}")
        summaries.append(summary)
    logger.debug("Preflight passed: %s", summaries)
    return summaries


#
# Egorov sweep
#


def _total_variation(mu: PhaseSpaceMeasure, nu: PhaseSpaceMeasure) -> float:
    a = np.asarray(mu.masses) / float(np.sum(mu.masses))
    b = np.asarray(nu.masses) / float(np.sum(nu.masses))
    return 0.5 * float(np.sum(np.abs(a - b)))


def _lattice_diameter(lattice) -> float:
    return math.hypot(*((n - 1) * h for n, h in zip(lattice.shape, lattice.spacing)))


@dataclasses.dataclass(frozen=True)
class _NoisedMeasures:
    initial: PhaseSpaceMeasure
    pushed: PhaseSpaceMeasure
    evolved: PhaseSpaceMeasure
    variance: float
    dim: int


def _noised_measures(
    state0: QuantumState,
    model: AbstractHamiltonian,
    T: float,
    policy: SolverPolicy,
) -> _NoisedMeasures:
    """`H_{N[ρ]}`, `Φ_T H_{N[ρ]}` and `H_{U_T N[ρ]}`, with the measured noising
    variance. None of these depend on `p`.
    """
    noised = noising_channel(state0)
    noised_T = propagate_quantum(noised, model, T, solver=_quantum_solver(policy))
    hN = _husimi_of(noised, policy)
    return _NoisedMeasures(
        initial=hN,
        pushed=_push(hN, model, T, policy),
        evolved=_husimi_of(noised_T, policy),
        variance=resolve_conventions(state0.grid).noising_variance,
        dim=state0.grid.dim,
    )


def _triangle_legs(
    h0: PhaseSpaceMeasure,
    hT: PhaseSpaceMeasure,
    pushed: PhaseSpaceMeasure,
    noised: _NoisedMeasures,
    p: float,
    policy: SolverPolicy,
    lipschitz: float,
) -> dict:
    """The three legs `H_{U_T ρ} → H_{U_T N[ρ]} → Φ_T H_{N[ρ]} → Φ_T H_ρ`, and the
    explicit noising bound `d(H_{N[ρ]}, H_ρ) <= r_p`.
    """
    legs = [
        _distance(hT, noised.evolved, p, policy),
        _distance(noised.evolved, noised.pushed, p, policy),
        _distance(noised.pushed, pushed, p, policy),
    ]
    noising = _distance(noised.initial, h0, p, policy)
    radius = gaussian_smoothing_radius(noised.variance, noised.dim, p)
    return {
        "noising_leg": legs[0].distance,
        "mixture_leg": legs[1].distance,
        "lipschitz_leg": legs[2].distance,
        "legs_gap": sum(leg.bound_gap for leg in legs),
        "noising_distance": noising.distance,
        "noising_gap": noising.bound_gap,
        "noising_radius": radius,
        "noising_within_radius": noising.distance - noising.bound_gap <= radius,
        "lipschitz_leg_bound": lipschitz * noising.distance,
        "flow_lipschitz": lipschitz,
    }


def _egorov_job(
    scenario: Scenario, hbar: float, T: float, artifacts: dict, lock: _thread.LockType
) -> list[dict]:
    grid, model, state0 = _setup(scenario, hbar)
    policy = scenario.solver
    h0 = _husimi_of(state0, policy)
    state_T = propagate_quantum(state0, model, T, solver=_quantum_solver(policy))
    hT = _husimi_of(state_T, policy)
    pushed = _push(h0, model, T, policy)
    if hbar == min(scenario.hbar_list):
        with lock:
            artifacts[f"husimi_T{T:g}"] = hT
            artifacts["husimi_T0"] = h0
    oracle = None
    if (
        scenario.model.name == "harmonic"
        and scenario.initial.kind == "coherent"
        and model.is_separable
    ):
        center = jnp.asarray(scenario.initial.center or (0.0,) * (2 * grid.dim))
        omega = float(scenario.model.params.get("omega", 1.0))
        exact = coherent_state(grid, harmonic_flow(center, T, omega))
        # Same lattice as `hT`, so the two measures share their atoms.
        oracle = husimi(exact, hT.lattice)
        oracle_tv = _total_variation(hT, oracle)
        oracle_diameter = _lattice_diameter(hT.lattice)
    lipschitz = noised = None
    if scenario.triangle:
        lipschitz = flow_lipschitz(model, T, seed=scenario.seed) if T > 0 else 1.0
        noised = _noised_measures(state0, model, T, policy)
    rows = []
    for p in scenario.p_list:
        result = _distance(hT, pushed, p, policy)
        row = {
            "hbar": hbar,
            "T": T,
            "p": p,
            "n_x": grid.n_x,
            **_transport_columns(result),
            "ratio": result.distance / math.sqrt(hbar),
        }
        if oracle is not None:
            reference = _distance(oracle, pushed, p, policy)
            # W_p(hT, oracle) <= diam · TV^{1/p} for measures on a common support.
            tolerance = (
                result.bound_gap
                + reference.bound_gap
                + oracle_diameter * oracle_tv ** (1 / p)
            )
            row.update(
                {
                    "oracle_distance": reference.distance,
                    "oracle_gap": reference.bound_gap,
                    "oracle_tv": oracle_tv,
                    "oracle_tolerance": tolerance,
                    "oracle_match": oracle_tv <= ORACLE_TV_MAXIMUM
                    and abs(result.distance - reference.distance) <= tolerance + 1e-12,
                }
            )
        if scenario.triangle:
            legs = _triangle_legs(h0, hT, pushed, noised, p, policy, lipschitz)
            total = legs["noising_leg"] + legs["mixture_leg"] + legs["lipschitz_leg"]
            legs["triangle_holds"] = (
                result.distance - result.bound_gap <= total + legs["legs_gap"]
            )
            row.update(legs)
        rows.append(row)
    return rows


def run_egorov_sweep(
    scenario: Scenario,
    jobs: int = 1,
    progress_meter: AbstractProgressMeter = NoProgressMeter(),
) -> SweepReport:
    """Measures `d_{W_p}(H_{U_T ρ}, Φ_T H_ρ)` over the scenario's `ℏ`, `T` and `p`.

    For every `(T, p)` the distances are gated by a slope fit `s >= 0.45` of
    `log d` against `log ℏ`, and by the calibrated constant `d / √ℏ <= C` fitted at
    the largest `ℏ`. `T = 0` rows are instead gated by `d <= bound_gap`.

    For a coherent state of the harmonic oscillator the Husimi function of the
    closed-form evolution is sampled on the same lattice, and the `harmonic_oracle`
    gate checks `|d − d_oracle| <= bound_gap + oracle_gap + diam · TV^{1/p}` together
    with `TV <= 1e-3`.
    """
    preflight(scenario)
    artifacts: dict = {}
    lock = threading.Lock()
    job_list = [
        (
            _label(hbar=hbar, T=T),
            lambda hbar=hbar, T=T: _egorov_job(scenario, hbar, T, artifacts, lock),
        )
        for hbar in scenario.hbar_list
        for T in scenario.T_list
    ]
    rows, timings = _run_jobs(job_list, jobs, progress_meter)
    slack = _slack(scenario)
    gates = []
    for T in scenario.T_list:
        for p in scenario.p_list:
            group = [r for r in rows if r.get("T") == T and r.get("p") == p]
            tag = f"T={T:g},p={p:g}"
            if T == 0:
                for r in _ok(group):
                    r["zero_distance"] = r["distance"] <= r["bound_gap"] + 1e-8
                gates.append(_all_gate(f"zero_time[{tag}]", group, "zero_distance", {}))
                continue
            gates.append(_slope_gate(f"slope[{tag}]", group, "distance"))
            gates.append(
                _calibrated_gate(
                    f"calibrated[{tag}]",
                    group,
                    "distance",
                    scale=lambda r: math.sqrt(r["hbar"]),
                    slack=slack,
                    coarsest=lambda r: -r["hbar"],
                )
            )
    if any("oracle_match" in r for r in rows):
        gates.append(
            _all_gate(
                "harmonic_oracle",
                rows,
                "oracle_match",
                {"tv_maximum": ORACLE_TV_MAXIMUM},
            )
        )
    if scenario.triangle:
        gates.append(_all_gate("triangle", rows, "triangle_holds", {}))
        gates.append(_all_gate("noising_explicit", rows, "noising_within_radius", {}))
        for p in scenario.p_list:
            gates.append(
                _calibrated_gate(
                    f"noising_calibrated[p={p:g}]",
                    [r for r in rows if r.get("p") == p and "noising_distance" in r],
                    "noising_distance",
                    scale=lambda r: math.sqrt(r["hbar"]),
                    slack=slack,
                    coarsest=lambda r: (-r["hbar"], r["T"]),
                )
            )
    return SweepReport(
        name=scenario.name,
        operation="egorov",
        rows=rows,
        gates=gates,
        constants={"slope_minimum": SLOPE_MINIMUM, "slack": slack},
        timings=timings,
        artifacts=artifacts,
    )


#
# Mean-field check
#


def _meanfield_job(scenario: Scenario, hbar: float, T: float, lipschitz: float):
    grid, model, state0 = _setup(scenario, hbar)
    policy = scenario.solver
    dim = grid.dim
    state_T = propagate_quantum(state0, model, T, solver=_quantum_solver(policy))
    h0 = _husimi_of(state0, policy)
    pushed = _push(h0, model, T, policy)
    result = _distance(_husimi_of(state_T, policy), pushed, 2.0, policy)
    measured = result.distance**2 / (2 * dim)
    bound = (1 + 2 * math.exp(lipschitz * T)) * hbar
    slack = _slack(scenario)
    # Each branch of the propagated mixture is a propagated coherent state.
    components = []
    for b in range(state0.n_branches):
        branch0 = QuantumState(grid, jnp.ones(1), state0.psis[b : b + 1])
        branch_T = QuantumState(grid, jnp.ones(1), state_T.psis[b : b + 1])
        pushed_b = _push(_husimi_of(branch0, policy), model, T, policy)
        components.append(
            _distance(_husimi_of(branch_T, policy), pushed_b, 2.0, policy).distance
        )
    convexity = convexity_bound(components, np.asarray(state0.weights), 2.0)
    return [
        {
            "hbar": hbar,
            "T": T,
            "p": 2.0,
            "n_x": grid.n_x,
            **_transport_columns(result),
            "measured": measured,
            "bound": bound,
            "passed": measured <= bound * (1 + slack),
            "margin": bound * (1 + slack) - measured,
            "convexity_bound": convexity,
            "convexity_holds": result.distance - result.bound_gap <= convexity + 1e-6,
        }
    ]


def run_meanfield_check(
    scenario: Scenario,
    jobs: int = 1,
    progress_meter: AbstractProgressMeter = NoProgressMeter(),
) -> SweepReport:
    """Checks the explicit-constant bound
    `(1/2D) d_{W_2}(H_{U_T ρ}, Φ_T H_ρ)^2 <= (1 + 2 e^{Λ_H T}) ℏ` for a coherent mixture
    `ρ`, with a relative slack (default 10%) and no calibration.

    Also reports the convexity bound over the mixture components.
    """
    preflight(scenario)
    lipschitz, admissibility = estimate_lipschitz(scenario.model.build())
    job_list = [
        (
            _label(hbar=hbar, T=T),
            lambda hbar=hbar, T=T: _meanfield_job(scenario, hbar, T, lipschitz),
        )
        for hbar in scenario.hbar_list
        for T in scenario.T_list
    ]
    rows, timings = _run_jobs(job_list, jobs, progress_meter)
    slack = _slack(scenario)
    gates = [
        _all_gate("meanfield_explicit", rows, "passed", {"slack": slack}),
        _all_gate("convexity", rows, "convexity_holds", {}),
    ]
    return SweepReport(
        name=scenario.name,
        operation="meanfield",
        rows=rows,
        gates=gates,
        constants={"lipschitz": lipschitz, "slack": slack},
        extras={"admissibility": admissibility.to_dict()},
        timings=timings,
    )


#
# Localisation check
#


def _localization_job(scenario: Scenario, hbar: float, T: float, lipschitz: float):
    grid, model, state0 = _setup(scenario, hbar)
    policy = scenario.solver
    alpha0 = phase_space_mean(state0)
    alpha_T = flow_point(alpha0, model, T, dt=policy.classical_dt)
    state_T = propagate_quantum(state0, model, T, solver=_quantum_solver(policy))
    q0 = sobolev_norm(state0, 1, alpha0, form="quadratic") ** 2
    qT = sobolev_norm(state_T, 1, alpha_T, form="quadratic") ** 2
    k = scenario.k
    norm0 = sobolev_norm(state0, k, alpha0, form="sum")
    normT = sobolev_norm(state_T, k, alpha_T, form="sum")
    chain = uncertainty_chain_check(state_T, alpha_T, k_max=max(k, 2), form="sum")
    bound = math.exp(2 * lipschitz * T)
    slack = _slack(scenario)
    return [
        {
            "hbar": hbar,
            "T": T,
            "k": k,
            "q0": q0,
            "qT": qT,
            "measured": qT / q0,
            "bound": bound,
            "passed": qT / q0 <= bound * (1 + slack) if model.is_separable else None,
            "norm_ratio": normT / norm0,
            "chain_passed": chain.passed,
            "chain_margin": min(
                e.margin for e in chain.entries if e.margin is not None
            ),
            "form": "quadratic",
        }
    ]


def _rate_gate(rows: Sequence[dict], slack: float) -> Gate:
    """Fits the growth rate of `log(norm_ratio)` at the smallest positive `T` and checks
    that every larger `T` stays below the fitted exponential.
    """
    gates = []
    for hbar in sorted({r["hbar"] for r in _ok(rows)}):
        group = sorted(
            (r for r in _ok(rows) if r["hbar"] == hbar and r["T"] > 0),
            key=lambda r: r["T"],
        )
        if len(group) < 2:
            continue
        rate = max(math.log(group[0]["norm_ratio"]) / group[0]["T"], 0.0)
        for r in group[1:]:
            allowed = rate * r["T"] + math.log1p(slack)
            gates.append(
                {
                    "hbar": hbar,
                    "T": r["T"],
                    "passed": math.log(r["norm_ratio"]) <= allowed,
                }
            )
    if not gates:
        return Gate("calibrated_rate", "skipped", {"reason": "fewer than two T > 0"})
    failures = [g for g in gates if not g["passed"]]
    verdict = "fail" if failures else "pass"
    return Gate("calibrated_rate", verdict, {"failures": failures})


def run_localization_check(
    scenario: Scenario,
    jobs: int = 1,
    progress_meter: AbstractProgressMeter = NoProgressMeter(),
) -> SweepReport:
    """Measures `Q(T) = ‖U_T ψ‖²_{H¹_{α(T)}}` along the classical trajectory `α(T)` of
    the phase-space mean, and the `k`-th order localisation norm ratio.

    Separable models are gated by `Q(T)/Q(0) <= e^{2 Λ_H T}` with a relative slack
    (default 5%); general symbols by a calibrated exponential rate. The uncertainty
    chain `‖·‖_{H^k} >= √ℏ ‖·‖_{H^{k−1}}` is checked at every `T`.
    """
    preflight(scenario)
    model = scenario.model.build()
    lipschitz, admissibility = estimate_lipschitz(model)
    job_list = [
        (
            _label(hbar=hbar, T=T),
            lambda hbar=hbar, T=T: _localization_job(scenario, hbar, T, lipschitz),
        )
        for hbar in scenario.hbar_list
        for T in scenario.T_list
    ]
    rows, timings = _run_jobs(job_list, jobs, progress_meter)
    slack = _slack(scenario)
    gates = [_all_gate("uncertainty_chain", rows, "chain_passed", {})]
    if model.is_separable:
        gates.append(_all_gate("gronwall_explicit", rows, "passed", {"slack": slack}))
    else:
        gates.append(_rate_gate(rows, slack))
    return SweepReport(
        name=scenario.name,
        operation="localization",
        rows=rows,
        gates=gates,
        constants={"lipschitz": lipschitz, "slack": slack},
        extras={"admissibility": admissibility.to_dict()},
        timings=timings,
    )


#
# Local unitary check
#


def _local_unitary_job(scenario: Scenario, hbar: float, T: float):
    grid, model, state0 = _setup(scenario, hbar)
    policy = scenario.solver
    backward = dense_propagator(model, grid, -T)
    h0 = _husimi_of(state0, policy)
    center = phase_space_mean(state0)
    z_lattice = covering_lattice(state0, spacing=math.sqrt(hbar), tail=1e-6)
    rows = []
    for factor in scenario.alpha_factors:
        alpha = jnp.zeros(2 * grid.dim).at[0].set(factor * math.sqrt(hbar))
        shift = jnp.linalg.norm(alpha)
        if T == 0:
            moved = translate(state0, alpha)
        else:
            W = evolve_operator(backward, translation_operator(grid, alpha))
            moved = check_boundary(
                state0.with_psis(W.apply(state0.psis)), context="local unitary"
            )
        h_moved = _husimi_of(moved, policy, offset=alpha)
        z_norms = {}
        if T > 0:
            for M in (1, 2, 3):
                z_norms[f"z{M}"] = z_norm(W, M, z_lattice)
        shift_ratio = sobolev_shift_ratio(state0, alpha, center, scenario.k)
        for p in scenario.p_list:
            result = _distance(h0, h_moved, p, policy)
            row = {
                "hbar": hbar,
                "T": T,
                "p": p,
                "alpha_factor": factor,
                "alpha_norm": float(shift),
                **_transport_columns(result),
                "shape": math.sqrt(hbar) + float(shift),
                "polynomial_factor": 1 + (float(shift) ** 4 / hbar**2) ** grid.dim,
                "shift_ratio": shift_ratio,
                **z_norms,
            }
            if T == 0:
                row["translation_exact"] = (
                    abs(result.distance - float(shift)) <= result.bound_gap + 1e-6
                )
            rows.append(row)
    return rows


def run_local_unitary_check(
    scenario: Scenario,
    jobs: int = 1,
    progress_meter: AbstractProgressMeter = NoProgressMeter(),
) -> SweepReport:
    """Measures `d_{W_p}(H_ρ, H_{W ρ W†})` for the locally translating unitary
    `W = e^{iĤT/ℏ} τ_α e^{−iĤT/ℏ}`, `|α| ∈ {1, 2, 4} √ℏ` by default.

    `T = 0` rows must reproduce `d = |α|`; other rows are gated by the shape
    `d <= C (√ℏ + |α|)`, with `C` calibrated at the largest `ℏ` and smallest `|α|`.
    The `Z^M` norms of `W` for `M = 1, 2, 3` and the Sobolev shift ratios are
    reported alongside.
    """
    preflight(scenario)
    job_list = [
        (
            _label(hbar=hbar, T=T),
            lambda hbar=hbar, T=T: _local_unitary_job(scenario, hbar, T),
        )
        for hbar in scenario.hbar_list
        for T in scenario.T_list
    ]
    rows, timings = _run_jobs(job_list, jobs, progress_meter)
    slack = _slack(scenario)
    gates = [_all_gate("translation", rows, "translation_exact", {})]
    for T in scenario.T_list:
        if T == 0:
            continue
        for p in scenario.p_list:
            gates.append(
                _calibrated_gate(
                    f"shape[T={T:g},p={p:g}]",
                    [r for r in rows if r.get("T") == T and r.get("p") == p],
                    "distance",
                    scale=lambda r: r["shape"],
                    slack=slack,
                    coarsest=lambda r: (-r["hbar"], r["alpha_norm"]),
                )
            )
    ratios = [r["shift_ratio"] for r in _ok(rows)]
    extras = {}
    if ratios:
        extras["shift_ratio_spread"] = max(ratios) / min(ratios)
    return SweepReport(
        name=scenario.name,
        operation="local_unitary",
        rows=rows,
        gates=gates,
        constants={"slack": slack},
        extras=extras,
        timings=timings,
    )


#
# Operator Egorov check
#


def observable(name: str, dim: int = 1) -> Callable:
    """The observables `sin x`, `cos x`, `x`, `p` and `cos x cos p` (first axis)."""
    if name == "sin":
        return lambda alpha: jnp.sin(alpha[0])
    if name == "cos":
        return lambda alpha: jnp.cos(alpha[0])
    if name == "x":
        return lambda alpha: alpha[0]
    if name == "p":
        return lambda alpha: alpha[dim]
    if name == "cos_cos":
        return lambda alpha: jnp.cos(alpha[0]) * jnp.cos(alpha[dim])
    raise ValueError(f"Unknown observable '{name}'.")


def operator_egorov_terms(
    model: AbstractHamiltonian,
    grid: PhaseSpaceGrid,
    symbol: Callable,
    T: float,
    dt: float = 1e-3,
) -> tuple[float, float]:
    """`(‖U_T Op(G) U_T† − Op(G ∘ Φ_{−T})‖_window, ‖Op(G ∗ γ_ℏ − G)‖)`, with
    `U_T = e^{−iĤT/ℏ}` and the norm restricted to the spectral window about the
    origin.
    """
    operator = weyl_quantize(symbol, grid)
    if T == 0:
        difference = 0.0
    else:
        evolved = evolve_operator(dense_propagator(model, grid, T), operator)
        backward = flow_map(model, -T, dt)
        composed = weyl_quantize(lambda alpha: symbol(backward(alpha)), grid)
        difference = windowed_operator_norm(evolved - composed, make_window(grid))
    mollified = weyl_quantize(mollify_symbol(symbol, grid), grid)
    return difference, operator_norm(mollified - operator)


def _operator_egorov_job(scenario: Scenario, hbar: float, T: float):
    grid = scenario.grid.make_grid(scenario.model.dim, hbar)
    model = scenario.model.build()
    symbol = observable(scenario.observable, grid.dim)
    difference, mollification = operator_egorov_terms(
        model, grid, symbol, T, scenario.solver.classical_dt
    )
    row = {
        "hbar": hbar,
        "T": T,
        "n_x": grid.n_x,
        "observable": scenario.observable,
        "measured": difference,
        "mollification": mollification,
    }
    if scenario.observable in ("sin", "cos"):
        row["mollification_oracle"] = 1 - math.exp(-hbar / 2)
        row["mollification_within_oracle"] = mollification <= 1.1 * (
            1 - math.exp(-hbar / 2)
        )
    return [row]


def run_operator_egorov_check(
    scenario: Scenario,
    jobs: int = 1,
    progress_meter: AbstractProgressMeter = NoProgressMeter(),
) -> SweepReport:
    """Measures `‖U_T(Op(G)) − Op(Φ_T G)‖` across `ℏ` and gates its slope
    `s >= 0.45`; measures the mollification term `‖Op(G ∗ γ_ℏ − G)‖` and gates it by a
    calibrated `C √ℏ` (and by the closed form `1.1 (1 − e^{−ℏ/2})` for `sin`, `cos`).
    """
    preflight(scenario)
    job_list = [
        (
            _label(hbar=hbar, T=T),
            lambda hbar=hbar, T=T: _operator_egorov_job(scenario, hbar, T),
        )
        for hbar in scenario.hbar_list
        for T in scenario.T_list
    ]
    rows, timings = _run_jobs(job_list, jobs, progress_meter)
    slack = _slack(scenario)
    gates = []
    for T in scenario.T_list:
        if T == 0:
            continue
        group = [r for r in rows if r.get("T") == T]
        gates.append(_slope_gate(f"slope[T={T:g}]", group, "measured"))
    first_T = scenario.T_list[0]
    mollification_rows = [r for r in rows if r.get("T") == first_T]
    gates.append(
        _calibrated_gate(
            "mollification_calibrated",
            mollification_rows,
            "mollification",
            scale=lambda r: math.sqrt(r["hbar"]),
            slack=slack,
            coarsest=lambda r: -r["hbar"],
        )
    )
    if scenario.observable in ("sin", "cos"):
        gates.append(
            _all_gate("mollification_oracle", rows, "mollification_within_oracle", {})
        )
    return SweepReport(
        name=scenario.name,
        operation="operator_egorov",
        rows=rows,
        gates=gates,
        constants={"slope_minimum": SLOPE_MINIMUM, "slack": slack},
        timings=timings,
    )


_OPERATIONS = {
    "egorov": run_egorov_sweep,
    "meanfield": run_meanfield_check,
    "localization": run_localization_check,
    "local_unitary": run_local_unitary_check,
    "operator_egorov": run_operator_egorov_check,
}


def run_scenario(
    scenario: Scenario,
    jobs: int = 1,
    progress_meter: AbstractProgressMeter = NoProgressMeter(),
) -> SweepReport:
    """Runs the sweep named by `scenario.operation`."""
    return _OPERATIONS[scenario.operation](scenario, jobs, progress_meter)
