"""Command-line front end.

Usage::

    solve <command> --config run.yaml [--out DIR] [--set key=value ...]

Exit codes: 0 ok, 2 config, 3 data-inconsistent, 4 not-converged,
5 oracle-failure, 1 anything else.  Errors print one line to stderr of the
form ``error[<category>]: <message>``.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np
from scipy.integrate import trapezoid

from . import __version__
from .config import COMMANDS, RunConfig, load_flux_csv, parse_config
from .exceptions import (
    CoefficientError,
    ConfigError,
    DataInconsistent,
    DegenerateKernel,
    DomainError,
    EvaluationError,
    HeatInvError,
    InvalidGrid,
    NotConverged,
    NotConvergedWarning,
    OracleFailure,
    OutOfRange,
)
from .forward import accumulate_A, fd_solve, reconstruct_u, solve_modes, synthesize_flux
from .inverse import closed_form_recover, contraction_estimate, fixed_point_solve
from .model import FluxData, validate_assumptions
from .spectral import lift

EXIT_OK = 0
EXIT_OTHER = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NOT_CONVERGED = 4
EXIT_ORACLE = 5

_EXIT_CODES = (
    (ConfigError, EXIT_CONFIG),
    (InvalidGrid, EXIT_CONFIG),
    (CoefficientError, EXIT_CONFIG),
    (DataInconsistent, EXIT_DATA),
    (OutOfRange, EXIT_DATA),
    (DomainError, EXIT_DATA),
    (DegenerateKernel, EXIT_DATA),
    (EvaluationError, EXIT_DATA),
    (OracleFailure, EXIT_ORACLE),
)


def write_csv(path: Path, header, columns):
    """Header row plus columns printed with 17 significant digits."""
    data = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in data:
            fh.write(",".join(format(v, ".17g") for v in row) + "\n")


def write_json(path: Path, payload):
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _flux_for(config: RunConfig, lifted=None):
    """Flux from the CSV table if given, else synthesized from ``a_true``."""
    if config.g_csv is not None:
        return load_flux_csv(config.g_csv, config.grid), "csv"
    lifted = lifted or lift(config.problem, config.grid, config.solver.modes)
    A = accumulate_A(config.problem.a_true, config.grid, config.problem.a_floor)
    return synthesize_flux(solve_modes(A, lifted.mode_data), lifted), "synthetic"


def _invert(config: RunConfig, data: FluxData, lifted):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NotConvergedWarning)
        result = fixed_point_solve(data, lifted, config.solver)
    return result


def cmd_forward(config: RunConfig, out: Path):
    spec, grid = config.problem, config.grid
    lifted = lift(spec, grid, config.solver.modes)
    A = accumulate_A(spec.a_true, grid, spec.a_floor)
    traj = solve_modes(A, lifted.mode_data)
    flux = synthesize_flux(traj, lifted)
    t = grid.nodes
    write_csv(out / "g.csv", ("t", "g"), (t, flux.g))
    md = lifted.mode_data
    write_csv(out / "coefficients.csv", ("m", "H"), (np.arange(1, md.M + 1), md.H))
    x = np.linspace(0.0, np.pi, config.x_count + 1)
    for ts in config.snapshots:
        i = int(round(ts / grid.dt))
        snap = reconstruct_u(traj, lifted, x, i)
        write_csv(out / f"field_{snap.t:.6g}.csv", ("x", "u"), (snap.x_nodes, snap.values))
    summary = {"command": "forward", "g0": float(flux.g[0]), "A_end": float(A.values[-1])}
    if config.oracle:
        _, fd_flux = fd_solve(spec, spec.a_true, max(config.x_count, 8), grid, keep=[])
        write_csv(out / "g_fd.csv", ("t", "g"), (t, fd_flux.g))
        summary["oracle_flux_sup_diff"] = float(np.max(np.abs(fd_flux.g - flux.g)))
    write_json(out / "forward.json", summary)
    return EXIT_OK


def _report(config, data, lifted, result, source):
    return {
        "command": config.command,
        "flux_source": source,
        "interpolation_note": (
            "g was linearly interpolated from the CSV table onto the solver grid"
            if source == "csv"
            else None
        ),
        "inverse": result.as_dict(),
        "contraction": contraction_estimate(lifted, data, config.solver).as_dict(),
    }


def cmd_invert(config: RunConfig, out: Path):
    lifted = lift(config.problem, config.grid, config.solver.modes)
    data, source = _flux_for(config, lifted)
    result = _invert(config, data, lifted)
    write_csv(out / "result.csv", ("t", "A", "a"), (config.grid.nodes, result.A.values, result.a.values))
    write_json(out / "report.json", _report(config, data, lifted, result, source))
    if not result.converged:
        raise NotConverged(
            f"{result.method} did not reach tol={config.solver.tol:g} in {result.iterations_used} iterations"
        )
    return EXIT_OK


def _l2(values, dt):
    values = np.asarray(values)
    return math.sqrt(float(trapezoid(values**2, dx=dt))) if values.size > 1 else 0.0


def cmd_roundtrip(config: RunConfig, out: Path):
    spec, grid = config.problem, config.grid
    lifted = lift(spec, grid, config.solver.modes)
    A_true = accumulate_A(spec.a_true, grid, spec.a_floor)
    flux = synthesize_flux(solve_modes(A_true, lifted.mode_data), lifted)
    if config.noise > 0:
        # g(0) is pinned by the initial data, so node 0 stays exact
        rng = np.random.default_rng(config.seed)
        noise = rng.uniform(-config.noise, config.noise, size=flux.g.shape)
        noise[0] = 0.0
        flux = FluxData(grid, flux.g + noise)
    result = _invert(config, flux, lifted)
    t = grid.nodes
    a_true = np.asarray(spec.a_true(t), dtype=float) + np.zeros_like(t)
    err_A = result.A.values - A_true.values
    err_a = (result.a.values - a_true)[1:-1]
    summary = {
        "command": "roundtrip",
        "noise": config.noise,
        "A_sup_error": float(np.max(np.abs(err_A))),
        "A_l2_error": _l2(err_A, grid.dt),
        "a_interior_sup_error": float(np.max(np.abs(err_a))),
        "a_interior_l2_error": _l2(err_a, grid.dt),
        "inverse": result.as_dict(),
        "contraction": contraction_estimate(lifted, flux, config.solver).as_dict(),
    }
    write_csv(out / "g.csv", ("t", "g"), (t, flux.g))
    write_csv(out / "result.csv", ("t", "A", "a"), (t, result.A.values, result.a.values))
    write_json(out / "summary.json", summary)
    if not result.converged:
        raise NotConverged(
            f"{result.method} did not reach tol={config.solver.tol:g} in {result.iterations_used} iterations"
        )
    return EXIT_OK


def cmd_closedform(config: RunConfig, out: Path):
    data, _ = _flux_for(config)
    a = closed_form_recover(data, config.t_min)
    keep = np.isfinite(a.values)
    write_csv(out / "closedform.csv", ("t", "a"), (a.t[keep], a.values[keep]))
    return EXIT_OK


def cmd_validate(config: RunConfig, out: Path):
    data = load_flux_csv(config.g_csv, config.grid) if config.g_csv is not None else None
    report = validate_assumptions(config.problem, config.grid, config.solver.modes, data=data)
    write_json(out / "assumptions.json", report.as_dict())
    return EXIT_OK


COMMAND_TABLE = {
    "forward": cmd_forward,
    "invert": cmd_invert,
    "roundtrip": cmd_roundtrip,
    "closedform": cmd_closedform,
    "validate": cmd_validate,
}


def run(config: RunConfig, out_dir) -> int:
    """Execute ``config.command``, writing artifacts to ``out_dir``.

    Returns the exit status; library errors propagate to :func:`main`.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return COMMAND_TABLE[config.command](config, out)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="solve",
        description="Recover a time-dependent diffusion coefficient from boundary flux data.",
        epilog="exit codes: 0 ok, 1 other error, 2 config, 3 data-inconsistent, "
        "4 not-converged, 5 oracle-failure",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, type=Path, help="YAML run configuration")
    parser.add_argument("--out", type=Path, default=Path("."), help="output directory")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config key, e.g. --set solver.tol=1e-12",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return parser


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, NotConverged):
        return EXIT_NOT_CONVERGED
    for cls, code in _EXIT_CODES:
        if isinstance(exc, cls):
            return code
    return EXIT_OTHER


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = parse_config(args.config, args.overrides).for_command(args.command)
        return run(config, args.out)
    except HeatInvError as exc:
        print(f"error[{exc.category}]: {exc}", file=sys.stderr)
        return exit_code_for(exc)
    except (ValueError, OSError) as exc:
        print(f"error[other]: {exc}", file=sys.stderr)
        return EXIT_OTHER


if __name__ == "__main__":
    sys.exit(main())
