import argparse
import dataclasses
import logging
import os
import sys
from collections.abc import Sequence
from typing import Optional

import jax.numpy as jnp
import numpy as np

from ._dynamics import (
    dense_propagator,
    evolve_operator,
    flow_trajectory,
    propagate_quantum,
)
from ._experiments import observable, preflight, run_scenario
from ._hamiltonian import AbstractHamiltonian, model_from_name, model_names
from ._io import load_state, measure_to_csv, read_measure, save_result, save_state
from ._norms import sobolev_norm, z_norm
from ._plotting import plot_report
from ._progress_meter import NoProgressMeter, TextProgressMeter, TqdmProgressMeter
from ._report import write_json
from ._scenario import (
    load_scenario,
    OBSERVABLES,
    RunManifest,
    Scenario,
    scenario_to_dict,
    ScenarioError,
)
from ._solution import EgoraxError, raise_if_failed, result_name
from ._state import phase_space_mean
from ._transforms import covering_lattice, husimi, weyl_quantize, wigner
from ._transport import TransportProblem, wasserstein


logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_GATE_FAILED = 2
EXIT_USAGE = 64

OUTPUT_DIR_ENV = "EGORAX_OUTPUT_DIR"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage, which would read as a failed gate.
    def error(self, message):
        raise _UsageError(f"{self.prog}: error: {message}")


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers: {text!r}")


#
# run
#


def _apply_manifest(scenario: Scenario, manifest: RunManifest) -> Scenario:
    changes = {}
    if manifest.seed is not None:
        changes["seed"] = manifest.seed
        changes["initial"] = dataclasses.replace(scenario.initial, seed=manifest.seed)
    if manifest.solver is not None:
        changes["solver"] = dataclasses.replace(
            scenario.solver, transport=manifest.solver
        )
    return scenario.with_overrides(**changes) if changes else scenario


def cmd_run(manifest: RunManifest, progress: str = "none") -> int:
    """Runs a scenario and writes `report.json`, `report.csv`, `timings.json` and plots
    into the output directory.

    **Returns:**

    `0` if every gate passes, `2` if a gate fails, `1` if the scenario cannot be
    executed or some rows failed numerically, and `64` if the scenario is malformed.
    """
    try:
        scenario = _apply_manifest(load_scenario(manifest.scenario_path), manifest)
    except ScenarioError as e:
        print(str(e), file=sys.stderr)
        return EXIT_USAGE
    os.makedirs(manifest.output_dir, exist_ok=True)
    write_json(
        os.path.join(manifest.output_dir, "scenario.json"), scenario_to_dict(scenario)
    )
    try:
        if manifest.preflight_only:
            summaries = preflight(scenario)
            write_json(
                os.path.join(manifest.output_dir, "preflight.json"),
                {"name": scenario.name, "hbar": summaries},
            )
            logger.info("Preflight of %s passed.", scenario.name)
            return EXIT_OK
        meter = {
            "none": NoProgressMeter,
            "text": TextProgressMeter,
            "tqdm": TqdmProgressMeter,
        }[progress]()
        report = run_scenario(scenario, jobs=manifest.jobs, progress_meter=meter)
    except EgoraxError as e:
        print(f"{result_name(e.result)}: {e.detail}", file=sys.stderr)
        return EXIT_ERROR
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    report.save_json(os.path.join(manifest.output_dir, "report.json"))
    report.save_csv(os.path.join(manifest.output_dir, "report.csv"))
    write_json(os.path.join(manifest.output_dir, "timings.json"), report.timings)
    plot_report(report, manifest.output_dir)
    for gate in report.gates:
        logger.info("Gate %s: %s", gate.name, gate.verdict)
    if report.failed_rows:
        for row in report.failed_rows:
            print(f"{row['job']}: {row['status']}: {row['detail']}", file=sys.stderr)
        return EXIT_ERROR
    if not report.passed:
        failed = [g.name for g in report.gates if g.verdict == "fail"]
        print(f"Failed gates: {', '.join(failed)}", file=sys.stderr)
        return EXIT_GATE_FAILED
    return EXIT_OK


#
# tool
#


def _model(args) -> AbstractHamiltonian:
    params = dict(args.param or [])
    return model_from_name(args.model, args.dim, **params)


def _tool_husimi(args) -> int:
    state = load_state(args.state)
    spacing = None if args.spacing is None else args.spacing * np.sqrt(state.grid.hbar)
    measure = husimi(state, covering_lattice(state, spacing=spacing))
    measure_to_csv(args.out, measure)
    return EXIT_OK


def _tool_wigner(args) -> int:
    measure_to_csv(args.out, wigner(load_state(args.state)))
    return EXIT_OK


def _tool_propagate(args) -> int:
    state = load_state(args.state)
    evolved = propagate_quantum(state, _model(args), args.T)
    save_state(args.out, evolved)
    return EXIT_OK


def _tool_flow(args) -> int:
    alpha = jnp.asarray(args.alpha)
    solution = flow_trajectory(alpha, _model(args), args.T, dt=args.dt)
    raise_if_failed(solution.result, "classical flow")
    if args.out is not None:
        solution.to_csv(args.out)
    print(" ".join(repr(float(v)) for v in solution.alphas[-1]))
    return EXIT_OK


def _tool_wasserstein(args) -> int:
    problem = TransportProblem(read_measure(args.mu), read_measure(args.nu), args.p)
    result = wasserstein(problem, solver=args.solver, return_plan=args.out is not None)
    if args.out is not None:
        save_result(args.out, result, include_plan=True)
    print(f"distance {result.distance!r} bound_gap {result.bound_gap!r}")
    return EXIT_OK


def _tool_znorm(args) -> int:
    state = load_state(args.state)
    grid = state.grid
    if args.scenario is None:
        model = _model(args)
        name = args.observable or "cos_cos"
    else:
        scenario = load_scenario(args.scenario)
        model = scenario.model.build()
        name = args.observable or scenario.observable
    if model.dim != grid.dim:
        raise ValueError(
            f"Model '{model.name}' has dimension {model.dim}, but the state has "
            f"{grid.dim}."
        )
    operator = weyl_quantize(observable(name, grid.dim), grid)
    if args.symbol == "evolved":
        propagator = dense_propagator(model, grid, args.T)
        operator = evolve_operator(propagator, operator)
    lattice = covering_lattice(state, spacing=np.sqrt(grid.hbar), tail=1e-6)
    print(repr(z_norm(operator, args.k, lattice)))
    return EXIT_OK


def _tool_sobolev(args) -> int:
    state = load_state(args.state)
    alpha = phase_space_mean(state) if args.alpha is None else jnp.asarray(args.alpha)
    print(repr(sobolev_norm(state, args.k, alpha, args.form)))
    return EXIT_OK


def cmd_tool(args: argparse.Namespace) -> int:
    """Runs the `egorax tool` subcommand selected by `args.tool`.

    **Returns:**

    `0` on success, `1` if the operation fails, and `64` if a scenario passed to it
    is malformed.
    """
    try:
        return args.handler(args)
    except ScenarioError as e:
        print(str(e), file=sys.stderr)
        return EXIT_USAGE
    except EgoraxError as e:
        print(f"{result_name(e.result)}: {e.detail}", file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


def _add_model_args(parser: argparse.ArgumentParser, default: Optional[str] = None):
    parser.add_argument(
        "--model", choices=model_names(), required=default is None, default=default
    )
    parser.add_argument("--dim", type=int, default=1)
    parser.add_argument(
        "--param",
        nargs=2,
        action="append",
        metavar=("NAME", "VALUE"),
        help="model parameter, e.g. --param omega 2",
    )


def _make_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="egorax",
        description="Numerical experiments on the quantum-classical correspondence.",
    )
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="count", default=0)
    verbosity.add_argument("-q", "--quiet", action="store_true")
    commands = parser.add_subparsers(
        dest="command", required=True, parser_class=_Parser
    )

    run = commands.add_parser("run", help="run a scenario")
    run.add_argument("scenario", help="a scenario file, or the name of a bundled one")
    run.add_argument(
        "--out", default=None, help=f"output directory (${OUTPUT_DIR_ENV})"
    )
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    run.add_argument("--solver", choices=("auto", "exact", "entropic"), default=None)
    run.add_argument("--preflight-only", action="store_true")
    run.add_argument("--progress", choices=("none", "text", "tqdm"), default="none")

    tool = commands.add_parser("tool", help="run a single operation")
    tools = tool.add_subparsers(dest="tool", required=True, parser_class=_Parser)

    sub = tools.add_parser("husimi", help="Husimi function of a state file, as CSV")
    sub.add_argument("state")
    sub.add_argument("--out", required=True)
    sub.add_argument(
        "--spacing", type=float, default=None, help="in units of sqrt(hbar)"
    )
    sub.set_defaults(handler=_tool_husimi)

    sub = tools.add_parser("wigner", help="Wigner function of a state file, as CSV")
    sub.add_argument("state")
    sub.add_argument("--out", required=True)
    sub.set_defaults(handler=_tool_wigner)

    sub = tools.add_parser("propagate", help="propagate a state file")
    sub.add_argument("state")
    sub.add_argument("--T", type=float, required=True)
    sub.add_argument("--out", required=True)
    _add_model_args(sub)
    sub.set_defaults(handler=_tool_propagate)

    sub = tools.add_parser("flow", help="classical flow of a phase-space point")
    sub.add_argument("--alpha", type=_floats, required=True)
    sub.add_argument("--T", type=float, required=True)
    sub.add_argument("--dt", type=float, default=1e-3)
    sub.add_argument("--out", default=None, help="trajectory CSV")
    _add_model_args(sub)
    sub.set_defaults(handler=_tool_flow)

    sub = tools.add_parser("wasserstein", help="certified W_p distance of two measures")
    sub.add_argument("mu")
    sub.add_argument("nu")
    sub.add_argument("--p", type=float, default=2.0)
    sub.add_argument("--solver", choices=("auto", "exact", "entropic"), default="auto")
    sub.add_argument("--out", default=None, help="result JSON, with the plan")
    sub.set_defaults(handler=_tool_wasserstein)

    sub = tools.add_parser(
        "znorm", help="Z^k norm of a quantised observable, optionally evolved"
    )
    sub.add_argument("state", help="state whose support fixes the centre lattice")
    sub.add_argument("--k", type=int, default=1)
    sub.add_argument("--symbol", choices=("plain", "evolved"), default="plain")
    sub.add_argument("--T", type=float, default=1.0)
    _add_model_args(sub, default="pendulum")
    sub.add_argument(
        "--observable", choices=OBSERVABLES, default=None, help="default cos_cos"
    )
    sub.add_argument(
        "--scenario", default=None, help="take the model and observable from here"
    )
    sub.set_defaults(handler=_tool_znorm)

    sub = tools.add_parser("sobolev", help="localised Sobolev norm of a state file")
    sub.add_argument("state")
    sub.add_argument("--k", type=int, default=1)
    sub.add_argument("--alpha", type=_floats, default=None)
    sub.add_argument("--form", choices=("sum", "quadratic"), default=None)
    sub.set_defaults(handler=_tool_sobolev)
    return parser


def _parse_params(args) -> None:
    if getattr(args, "param", None):
        args.param = [(name, float(value)) for name, value in args.param]


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _make_parser()
    try:
        args = parser.parse_args(argv)
        _parse_params(args)
    except _UsageError as e:
        parser.print_usage(sys.stderr)
        print(str(e), file=sys.stderr)
        return EXIT_USAGE
    except ValueError as e:
        print(f"egorax: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    level = logging.WARNING - 10 * args.verbose if not args.quiet else logging.ERROR
    logging.basicConfig(
        level=max(level, logging.DEBUG),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    if args.command == "run":
        output_dir = args.out or os.environ.get(OUTPUT_DIR_ENV) or "egorax-output"
        manifest = RunManifest(
            scenario_path=args.scenario,
            output_dir=output_dir,
            seed=args.seed,
            jobs=args.jobs,
            solver=args.solver,
            preflight_only=args.preflight_only,
        )
        return cmd_run(manifest, progress=args.progress)
    return cmd_tool(args)
