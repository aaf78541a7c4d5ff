import logging
import math
from collections.abc import Callable, Sequence
from typing import Literal, Optional

import equinox as eqx
import jax
import jax.lax as lax
import jax.numpy as jnp
import numpy as np
import ot
from jaxtyping import Array, ArrayLike, Float, Int

from ._measure import PhaseSpaceMeasure
from ._report import CheckEntry
from ._solution import EgoraxError, RESULTS


logger = logging.getLogger(__name__)

MASS_TOL = 1e-8
MAX_ATOMS = 5000
MAX_EXACT_ATOMS = 600
MAX_PRUNE_THRESHOLD = 1e-5


class TransportProblem(eqx.Module):
    """A discrete optimal transport problem between two phase-space measures, with
    cost `|α − β|^p` for the Euclidean norm on `ℝ^{2D}`.

    **Attributes:**

    - `mu`, `nu`: nonnegative measures of equal total mass (within `1e-8`).
    - `p`: the cost exponent, at least 1.
    """

    mu: PhaseSpaceMeasure
    nu: PhaseSpaceMeasure
    p: float = eqx.field(static=True, default=2.0)

    def __check_init__(self):
        if not self.p >= 1:
            raise ValueError(f"The cost exponent must be at least 1, got p={self.p}.")
        for name, measure in (("mu", self.mu), ("nu", self.nu)):
            if measure.signed or bool(jnp.any(measure.masses < 0)):
                raise ValueError(
                    f"`{name}` is a signed measure; transport needs masses."
                )
        if self.mu.dim != self.nu.dim:
            raise ValueError(
                "`mu` and `nu` live on phase spaces of different dimension."
            )
        mismatch = abs(self.mu.total_mass() - self.nu.total_mass())
        if mismatch > MASS_TOL:
            raise ValueError(
                f"Mass mismatch: `mu` has mass {self.mu.total_mass()} and `nu` has "
                f"mass {self.nu.total_mass()}."
            )

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "mu": measure_to_dict(self.mu),
            "nu": measure_to_dict(self.nu),
        }


def measure_to_dict(measure: PhaseSpaceMeasure) -> dict:
    return {
        "locations": np.asarray(measure.locations).tolist(),
        "masses": np.asarray(measure.masses).tolist(),
        "dropped_mass": measure.dropped_mass,
        "certificate": measure.certificate,
    }


def measure_from_dict(entry: dict) -> PhaseSpaceMeasure:
    return PhaseSpaceMeasure(
        jnp.asarray(entry["locations"], dtype=float),
        jnp.asarray(entry["masses"], dtype=float),
        dropped_mass=float(entry.get("dropped_mass", 0.0)),
        certificate=float(entry.get("certificate", 0.0)),
    )


def problem_from_dict(payload: dict) -> TransportProblem:
    return TransportProblem(
        measure_from_dict(payload["mu"]),
        measure_from_dict(payload["nu"]),
        float(payload["p"]),
    )


class TransportResult(eqx.Module):
    """The solution of a [`egorax.TransportProblem`][].

    **Attributes:**

    - `distance`: the certified upper value of `d_{W_p}`, i.e. `U^{1/p}` for the cost
        `U` of a feasible coupling.
    - `bound_gap`: the certified spread `U^{1/p} − L^{1/p}`, where `L` is the value of
        a feasible pair of dual potentials, plus the error certificates carried by the
        two measures. The true distance lies in `[distance − bound_gap, distance]` up to
        those certificates.
    - `p`: the cost exponent.
    - `solver`: `"exact"` or `"entropic"`.
    - `epsilon_final`: the last regularisation of the entropic solver, else `None`.
    - `primal_cost`: `U`.
    - `dual_objective`: `L = Σ μ_i f_i + Σ ν_j g_j`.
    - `plan`: the nonzero entries `(rows, cols, masses)` of the coupling, if requested.
    - `dual_f`, `dual_g`: the potentials on the supports of `mu` and `nu`, satisfying
        `f_i + g_j <= |x_i − y_j|^p`.
    """

    distance: float = eqx.field(static=True)
    bound_gap: float = eqx.field(static=True)
    p: float = eqx.field(static=True)
    solver: str = eqx.field(static=True)
    epsilon_final: Optional[float] = eqx.field(static=True)
    primal_cost: float = eqx.field(static=True)
    dual_objective: float = eqx.field(static=True)
    certificate: float = eqx.field(static=True)
    plan: Optional[tuple[Int[Array, " k"], Int[Array, " k"], Float[Array, " k"]]]
    dual_f: Optional[Float[Array, " n"]]
    dual_g: Optional[Float[Array, " m"]]

    @property
    def cost_gap(self) -> float:
        return self.primal_cost - self.dual_objective

    @property
    def lower(self) -> float:
        return max(self.distance - self.bound_gap, 0.0)

    def to_dict(self, include_plan: bool = False) -> dict:
        out = {
            "distance": self.distance,
            "bound_gap": self.bound_gap,
            "p": self.p,
            "solver": self.solver,
            "epsilon_final": self.epsilon_final,
            "primal_cost": self.primal_cost,
            "dual_objective": self.dual_objective,
            "certificate": self.certificate,
        }
        if include_plan and self.plan is not None:
            rows, cols, masses = self.plan
            out["plan"] = {
                "rows": np.asarray(rows).tolist(),
                "cols": np.asarray(cols).tolist(),
                "masses": np.asarray(masses).tolist(),
            }
        return out


#
# Support preprocessing
#


def _support_diameter(*measures: PhaseSpaceMeasure) -> float:
    points = np.concatenate([np.asarray(m.locations) for m in measures])
    return float(np.linalg.norm(points.max(axis=0) - points.min(axis=0)))


def prune_support(
    measure: PhaseSpaceMeasure, mass_threshold: float
) -> PhaseSpaceMeasure:
    """Drops the atoms with mass below `mass_threshold` and renormalises to the
    original total mass.

    The dropped mass `δm` is accumulated in `dropped_mass`; [`egorax.wasserstein`][]
    turns it into the additive certificate `δm^{1/p} · diam(support)`.

    **Raises:**

    `ValueError` if `mass_threshold > 1e-5`, if the measure is signed, or if no atom
    survives.
    """
    if mass_threshold > MAX_PRUNE_THRESHOLD:
        raise ValueError(
            f"`mass_threshold` must be at most {MAX_PRUNE_THRESHOLD}, got "
            f"{mass_threshold}."
        )
    if measure.signed:
        raise ValueError("Cannot prune a signed measure.")
    if mass_threshold <= 0:
        return measure
    masses = np.asarray(measure.masses)
    keep = masses >= mass_threshold
    if not keep.any():
        raise ValueError("Pruning would drop every atom of the measure.")
    if keep.all():
        return measure
    total = masses.sum()
    kept = masses[keep]
    dropped = float(total - kept.sum())
    return PhaseSpaceMeasure(
        jnp.asarray(np.asarray(measure.locations)[keep]),
        jnp.asarray(kept * total / kept.sum()),
        dropped_mass=measure.dropped_mass + dropped,
        certificate=measure.certificate,
    )


def thin_support(
    measure: PhaseSpaceMeasure, max_atoms: int = MAX_ATOMS, p: float = 2.0
) -> PhaseSpaceMeasure:
    """Aggregates the atoms of `measure` into voxel centroids until at most
    `max_atoms` remain.

    Moving every atom to the centroid of its voxel is a coupling, so the result is
    within `(Σ m_i |x_i − c(x_i)|^p)^{1/p}` of the input in `d_{W_p}`; this is added to
    the `certificate` of the returned measure.
    """
    if measure.signed:
        raise ValueError("Cannot thin a signed measure.")
    if max_atoms < 1:
        raise ValueError("`max_atoms` must be positive.")
    if measure.n_atoms <= max_atoms:
        return measure
    locations = np.asarray(measure.locations)
    masses = np.asarray(measure.masses)
    nonzero = masses > 0
    locations, masses = locations[nonzero], masses[nonzero]
    lower = locations.min(axis=0)
    extent = np.maximum(locations.max(axis=0) - lower, 1e-12)
    n_axes = locations.shape[1]
    width = (np.prod(extent) / max_atoms) ** (1 / n_axes)
    while True:
        voxels = np.floor((locations - lower) / width).astype(np.int64)
        _, inverse = np.unique(voxels, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        n_voxels = int(inverse.max()) + 1
        if n_voxels <= max_atoms:
            break
        width *= 1.25
    voxel_mass = np.bincount(inverse, weights=masses, minlength=n_voxels)
    centroids = np.stack(
        [
            np.bincount(inverse, weights=masses * locations[:, a], minlength=n_voxels)
            for a in range(n_axes)
        ],
        axis=-1,
    ) / voxel_mass[:, None]
    displacement = np.linalg.norm(locations - centroids[inverse], axis=-1)
    aggregation = float(np.sum(masses * displacement**p) ** (1 / p))
    logger.debug(
        "Thinned %d atoms to %d (voxel width %.3g, certificate %.3g).",
        measure.n_atoms,
        n_voxels,
        width,
        aggregation,
    )
    return PhaseSpaceMeasure(
        jnp.asarray(centroids),
        jnp.asarray(voxel_mass),
        dropped_mass=measure.dropped_mass,
        certificate=measure.certificate + aggregation,
    )


def _positive_atoms(measure: PhaseSpaceMeasure) -> tuple[np.ndarray, np.ndarray]:
    masses = np.asarray(measure.masses, dtype=float)
    keep = masses > 0
    return np.asarray(measure.locations, dtype=float)[keep], masses[keep]


def _cost_matrix(x: np.ndarray, y: np.ndarray, p: float) -> np.ndarray:
    if p == 2:
        return ot.dist(x, y, metric="sqeuclidean")
    return ot.dist(x, y, metric="euclidean") ** p


#
# Dual certification
#


@jax.jit
def _c_transform_pair(cost, f):
    g = jnp.min(cost - f[:, None], axis=0)
    f = jnp.min(cost - g[None, :], axis=1)
    return f, g


def _certify(cost, a, b, f) -> tuple[np.ndarray, np.ndarray, float]:
    """Makes `f` feasible by a double c-transform; returns the dual objective."""
    f, g = _c_transform_pair(jnp.asarray(cost), jnp.asarray(f))
    f, g = np.asarray(f), np.asarray(g)
    return f, g, float(a @ f + b @ g)


#
# Exact solver
#


def _solve_exact(cost, a, b):
    plan, log = ot.emd(a, b, cost, numItermax=10_000_000, log=True)
    if log.get("warning") is not None:
        raise EgoraxError(RESULTS.transport_failed, str(log["warning"]))
    f, g, dual = _certify(cost, a, b, log["u"])
    return plan, float(np.sum(plan * cost)), f, g, dual


#
# Entropic solver
#


def _sinkhorn_level(cost, a, b, epsilon, warmstart, tol=1e-9, max_steps=10_000):
    """One level of the ε schedule through POT's log-stabilised Sinkhorn, started
    from the full dual potentials of the previous level.
    """
    plan, log = ot.bregman.sinkhorn_stabilized(
        a,
        b,
        cost,
        epsilon,
        numItermax=max_steps,
        stopThr=tol,
        warmstart=warmstart,
        print_period=10,
        log=True,
        warn=False,
    )
    error = float(log["err"][-1]) if log["err"] else math.inf
    logger.debug(
        "Sinkhorn level eps=%.3e: %d iterations, marginal error %.2e.",
        epsilon,
        int(log["n_iter"]),
        error,
    )
    f, g = log["warmstart"]
    return np.asarray(plan), (np.asarray(f), np.asarray(g)), error


@jax.jit
def _greedy_round(order, n_cols, a, b):
    # Assigns mass to the entries in `order` as long as both marginals have room.
    def body(residual, flat):
        ra, rb = residual
        i, j = flat // n_cols, flat % n_cols
        t = jnp.minimum(ra[i], rb[j])
        return (ra.at[i].add(-t), rb.at[j].add(-t)), t

    (ra, rb), masses = lax.scan(body, (a, b), order)
    return masses, jnp.clip(ra, 0), jnp.clip(rb, 0)


def _complete(plan, a, b):
    ra = np.clip(a - plan.sum(axis=1), 0, None)
    rb = np.clip(b - plan.sum(axis=0), 0, None)
    missing = ra.sum()
    if missing > 0 and rb.sum() > 0:
        plan = plan + np.outer(ra, rb) / missing
    return plan


def _round_greedy(plan, a, b):
    n, m = plan.shape
    k = min(n * m, 20 * (n + m))
    flat = plan.reshape(-1)
    order = np.argpartition(-flat, k - 1)[:k] if k < n * m else np.arange(n * m)
    order = order[np.argsort(-flat[order], kind="stable")]
    masses, _, _ = _greedy_round(jnp.asarray(order), m, jnp.asarray(a), jnp.asarray(b))
    rounded = np.zeros(n * m)
    np.add.at(rounded, order, np.asarray(masses))
    return _complete(rounded.reshape(n, m), a, b)


def _round_marginals(plan, a, b):
    # Scale rows and columns down to the marginals, then fill the deficit with the
    # product of the residuals.
    plan = plan * np.minimum(1, a / np.maximum(plan.sum(axis=1), 1e-300))[:, None]
    plan = plan * np.minimum(1, b / np.maximum(plan.sum(axis=0), 1e-300))[None, :]
    return _complete(plan, a, b)


def _solve_entropic(
    cost, a, b, target_gap: float, levels: int = 10, extra_levels: int = 4
):
    scale = float(cost.max())
    if scale == 0:
        plan = np.outer(a, b) / a.sum()
        return plan, 0.0, np.zeros_like(a), np.zeros_like(b), 0.0, 0.0
    eps_start = scale / 10
    eps_end = max(1e-3 * scale, target_gap)
    if eps_end >= eps_start:
        schedule = [eps_start]
    else:
        schedule = list(np.geomspace(eps_start, eps_end, levels))

    best_plan, best_cost = None, math.inf
    best_f = best_g = None
    best_dual = -math.inf
    potentials = None
    for epsilon in schedule:
        plan, potentials, error = _sinkhorn_level(cost, a, b, epsilon, potentials)
    n_extra = 0
    while True:
        for rounded in (_round_greedy(plan, a, b), _round_marginals(plan, a, b)):
            value = float(np.sum(rounded * cost))
            if value < best_cost:
                best_plan, best_cost = rounded, value
        f_cert, g_cert, dual = _certify(cost, a, b, potentials[0])
        if dual > best_dual:
            best_f, best_g, best_dual = f_cert, g_cert, dual
        relative = (best_cost - best_dual) / max(best_cost, 1e-300)
        if relative <= 1e-3 or n_extra >= extra_levels:
            break
        n_extra += 1
        epsilon = epsilon / 10
        plan, potentials, error = _sinkhorn_level(cost, a, b, epsilon, potentials)
    if error > 1e-9:
        logger.warning(
            "Sinkhorn stopped at marginal error %.2e; the certified gap accounts for "
            "it.",
            error,
        )
    return best_plan, best_cost, best_f, best_g, best_dual, epsilon


def wasserstein(
    problem: TransportProblem,
    solver: Literal["auto", "exact", "entropic"] = "auto",
    target_gap: float = 0.0,
    return_plan: bool = False,
) -> TransportResult:
    """The `p`-Wasserstein distance between `problem.mu` and `problem.nu`.

    The exact solver (network simplex, at most 600 atoms per side) solves the linear
    program to optimality. The entropic solver (at most 5000 atoms per side) anneals a
    log-stabilised Sinkhorn iteration (`ot.bregman.sinkhorn_stabilized`) over a
    geometric `ε` schedule, warm-started level to level, rounds the entropic
    plan to a feasible coupling and certifies a lower bound through c-transformed
    potentials. Either way, `distance` is the value of a feasible coupling and
    `bound_gap` the certified spread.

    **Arguments:**

    - `problem`: the measures and exponent.
    - `solver`: `"auto"` picks `"exact"` when both sides have at most 600 atoms.
    - `target_gap`: a floor on the final `ε` of the entropic solver.
    - `return_plan`: whether to store the nonzero entries of the coupling.

    **Raises:**

    `ValueError` if a side has more than 5000 atoms (see [`egorax.thin_support`][]) or
    if `solver="exact"` is asked of more than 600 atoms.
    """
    p = problem.p
    x, a = _positive_atoms(problem.mu)
    y, b = _positive_atoms(problem.nu)
    n, m = len(a), len(b)
    if max(n, m) > MAX_ATOMS:
        raise ValueError(
            f"Atom cap exceeded: the supports have {n} and {m} atoms, at most "
            f"{MAX_ATOMS} are allowed. Use `thin_support` or `prune_support` first."
        )
    if solver == "auto":
        solver = "exact" if max(n, m) <= MAX_EXACT_ATOMS else "entropic"
    if solver == "exact" and max(n, m) > MAX_EXACT_ATOMS:
        raise ValueError(
            f"The exact solver takes at most {MAX_EXACT_ATOMS} atoms per side."
        )
    if solver not in ("exact", "entropic"):
        raise ValueError(f"Unknown transport solver '{solver}'.")
    if n == 0 or m == 0:
        raise ValueError("Cannot transport a measure of zero mass.")
    b = b * (a.sum() / b.sum())
    cost = _cost_matrix(x, y, p)

    epsilon_final = None
    if solver == "exact":
        plan, primal, f, g, dual = _solve_exact(cost, a, b)
    else:
        plan, primal, f, g, dual, epsilon_final = _solve_entropic(
            cost, a, b, target_gap
        )
    primal = max(primal, 0.0)
    dual = min(dual, primal)

    diameter = _support_diameter(problem.mu, problem.nu)
    certificate = problem.mu.certificate + problem.nu.certificate
    for measure in (problem.mu, problem.nu):
        if measure.dropped_mass > 0:
            certificate += measure.dropped_mass ** (1 / p) * diameter
    distance = primal ** (1 / p)
    bound_gap = distance - max(dual, 0.0) ** (1 / p) + certificate

    plan_entries = None
    if return_plan:
        rows, cols = np.nonzero(plan)
        plan_entries = (
            jnp.asarray(rows),
            jnp.asarray(cols),
            jnp.asarray(plan[rows, cols]),
        )
    logger.debug(
        "W_%g (%s, %dx%d atoms) = %.6g, gap %.3g.", p, solver, n, m, distance, bound_gap
    )
    return TransportResult(
        distance=distance,
        bound_gap=bound_gap,
        p=p,
        solver=solver,
        epsilon_final=epsilon_final,
        primal_cost=primal,
        dual_objective=dual,
        certificate=certificate,
        plan=plan_entries,
        dual_f=jnp.asarray(f),
        dual_g=jnp.asarray(g),
    )


#
# Closed forms and bounds
#


def wasserstein_to_point(
    measure: PhaseSpaceMeasure, alpha: ArrayLike, p: float = 2.0
) -> float:
    """`d_{W_p}(μ, δ_α) = (∫|z − α|^p dμ)^{1/p}`: the only coupling with a Dirac mass
    is the product one.
    """
    if measure.signed or bool(jnp.any(measure.masses < 0)):
        raise ValueError("`measure` is signed; transport needs masses.")
    total = measure.total_mass()
    if abs(total - 1) > 1e-6:
        raise ValueError(f"Expected a normalised measure, got total mass {total}.")
    alpha = jnp.asarray(alpha, dtype=float).reshape(-1)
    if alpha.shape[0] != measure.locations.shape[1]:
        raise ValueError("`alpha` does not match the dimension of the measure.")
    distances = jnp.linalg.norm(measure.locations - alpha, axis=-1)
    return float((jnp.sum(measure.masses * distances**p) / total) ** (1 / p))


def convexity_bound(
    distances: Sequence[float], weights: Sequence[float], p: float = 2.0
) -> float:
    """`(Σ w_i d_i^p)^{1/p}`: by convexity of `d_{W_p}^p` along mixtures, an upper
    bound on the distance between the mixtures `Σ w_i μ_i` and `Σ w_i ν_i` given the
    component distances `d_i = d_{W_p}(μ_i, ν_i)`.
    """
    distances = np.asarray(distances, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if distances.shape != weights.shape or distances.ndim != 1:
        raise ValueError("Need exactly one weight per component distance.")
    if np.any(weights < 0) or abs(weights.sum() - 1) > MASS_TOL:
        raise ValueError(
            f"Weights must be nonnegative and sum to one, got sum {weights.sum()}."
        )
    return float(np.sum(weights * distances**p) ** (1 / p))


def gaussian_smoothing_radius(variance: float, dim: int, p: float = 2.0) -> float:
    """`r_p = (E|Z|^p)^{1/p}` for `Z ~ N(0, variance · I_{2D})`.

    Coupling `z` with `z + Z` shows `d_{W_p}(μ, μ ∗ N(0, variance)) <= r_p`.
    """
    n = 2 * dim
    log_moment = (
        (p / 2) * math.log(2 * variance)
        + math.lgamma((n + p) / 2)
        - math.lgamma(n / 2)
    )
    return math.exp(log_moment / p)


def kantorovich_gap(
    result: TransportResult,
    mu: PhaseSpaceMeasure,
    nu: PhaseSpaceMeasure,
    phi: Callable[[Array], Array],
    lipschitz: float,
) -> CheckEntry:
    """Checks `|∫φ dμ − ∫φ dν| <= Lip(φ) · d_{W_1}(μ, ν)` for a `W_1` result."""
    if result.p != 1:
        raise ValueError("The Kantorovich–Rubinstein check needs a p = 1 result.")
    phi_mu = float(jnp.sum(mu.masses * jax.vmap(phi)(mu.locations)))
    phi_nu = float(jnp.sum(nu.masses * jax.vmap(phi)(nu.locations)))
    measured = abs(phi_mu - phi_nu)
    bound = lipschitz * result.distance
    return CheckEntry(
        name="kantorovich_rubinstein",
        measured=measured,
        bound=bound,
        passed=measured <= bound + MASS_TOL,
        margin=bound - measured,
        inputs={"lipschitz": lipschitz},
    )
