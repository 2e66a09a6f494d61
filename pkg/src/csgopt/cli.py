"""Command-line front end for the benchmark experiments.

Usage: ``csgopt <experiment> [options]``. An optional JSON config file can
prefill any experiment setting; explicit flags win over the config file,
which wins over built-in defaults. Exit codes: 0 success, 2 usage error,
1 runtime error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

import numpy as np

from .bench import EXPERIMENTS, ExperimentSpec, default_spec, run_experiment
from .linesearch import LineSearchConfig
from .problems import EvaluationError

_EPILOG = """\
exit codes:
  0  success
  2  usage error (bad flags, config, or spec)
  1  runtime error (I/O failure or failed evaluation)

environment:
  CSGOPT_THREADS  caps the replicate worker pool (default: all CPUs)
"""


def _parse_float_list(text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(part) for part in text.split(",") if part.strip() != "")
    except ValueError:
        raise ValueError(f"expected a comma-separated float list, got {text!r}") from None
    if not values:
        raise ValueError("expected at least one value")
    return values


def _parse_grid(text: str, log: bool) -> tuple[float, ...]:
    """Grid spec: either lo:hi:count (count points) or a comma list."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"grid spec must be lo:hi:count, got {text!r}")
        try:
            lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
        except ValueError:
            raise ValueError(f"grid spec must be lo:hi:count, got {text!r}") from None
        if count < 1:
            raise ValueError("grid count must be at least 1")
        if count == 1:
            return (lo,)
        space = np.geomspace if log else np.linspace
        return tuple(space(lo, hi, count))
    return _parse_float_list(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="csgopt",
        description="Run gradient-aggregation benchmark experiments.",
        epilog=_EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    subparsers = parser.add_subparsers(dest="experiment", required=True)
    descriptions = {
        "constant-steps": "constant-step convergence study on the 1-D quadratic",
        "stability-grid": "step-schedule (tau0, d) robustness grid on the 5-D bump",
        "rosenbrock": "line-searched variants against AdaGrad on noisy Rosenbrock",
        "single-run": "one optimizer run with a full per-iteration trace",
    }
    for name in EXPERIMENTS:
        sub = subparsers.add_parser(
            name, help=descriptions[name], epilog=_EPILOG,
            formatter_class=argparse.RawDescriptionHelpFormatter,
        )
        sub.add_argument("--config", metavar="PATH",
                         help="JSON file prefilling experiment settings")
        sub.add_argument("--replicates", type=int, metavar="N",
                         help="number of independent replicates")
        sub.add_argument("--iters", type=int, metavar="N",
                         help="iterations per replicate")
        sub.add_argument("--seed", type=int, metavar="S",
                         help="base seed for all replicate streams")
        sub.add_argument("--out", metavar="PATH", help="output file path")
        sub.add_argument("--format", choices=("csv", "json"), dest="fmt",
                         help="output format (default csv)")
        sub.add_argument("--optimizer", action="append", metavar="NAME",
                         help="restrict to this optimizer (repeatable)")
        sub.add_argument("--full-scale", action="store_true",
                         help="use the full published experiment sizes")
        if name in ("constant-steps", "single-run"):
            sub.add_argument("--tau", metavar="LIST",
                             help="comma-separated constant step sizes")
        if name in ("stability-grid", "single-run"):
            sub.add_argument("--tau0-grid", metavar="SPEC", dest="tau0_grid",
                             help="initial-step grid, lo:hi:count (log) or comma list")
            sub.add_argument("--d-grid", metavar="SPEC", dest="d_grid",
                             help="decay-exponent grid, lo:hi:count or comma list")
        if name == "single-run":
            sub.add_argument("--problem", choices=("quad1d", "bump5d", "rosenbrock"),
                             help="benchmark problem to run")
    return parser


_SPEC_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentSpec)}


def _apply_config_file(spec: ExperimentSpec, path: str) -> ExperimentSpec:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ValueError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValueError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ValueError(f"config file {path} must hold a JSON object")
    updates = {}
    for key, value in data.items():
        if key not in _SPEC_FIELDS:
            raise ValueError(f"unknown config key {key!r}")
        if key == "line_config":
            if not isinstance(value, dict):
                raise ValueError("line_config must be an object")
            value = LineSearchConfig(**value)
        elif isinstance(value, list):
            value = tuple(value)
        updates[key] = value
    if "experiment" in updates and updates["experiment"] != spec.experiment:
        raise ValueError(
            f"config file is for experiment {updates['experiment']!r}, "
            f"not {spec.experiment!r}"
        )
    updates.pop("experiment", None)
    return dataclasses.replace(spec, **updates)


def _spec_from_args(args: argparse.Namespace) -> ExperimentSpec:
    spec = default_spec(args.experiment, full_scale=args.full_scale)
    if args.config:
        spec = _apply_config_file(spec, args.config)
    updates: dict = {}
    if args.replicates is not None:
        updates["replicates"] = args.replicates
    if args.iters is not None:
        updates["iters"] = args.iters
    if args.seed is not None:
        updates["base_seed"] = args.seed
    if args.out is not None:
        updates["out_path"] = args.out
    if args.fmt is not None:
        updates["fmt"] = args.fmt
    if args.optimizer:
        updates["optimizers"] = tuple(args.optimizer)
    if getattr(args, "tau", None) is not None:
        updates["taus"] = _parse_float_list(args.tau)
    if getattr(args, "tau0_grid", None) is not None:
        updates["tau0_grid"] = _parse_grid(args.tau0_grid, log=True)
    if getattr(args, "d_grid", None) is not None:
        updates["d_grid"] = _parse_grid(args.d_grid, log=False)
    if getattr(args, "problem", None) is not None:
        updates["problem"] = args.problem
    spec = dataclasses.replace(spec, **updates)
    spec.validate()
    return spec


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        spec = _spec_from_args(args)
    except (ValueError, TypeError) as exc:
        print(f"csgopt: error: {exc}", file=sys.stderr)
        return 2
    try:
        run_experiment(spec)
    except (OSError, EvaluationError, RuntimeError) as exc:
        print(f"csgopt: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"csgopt: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
