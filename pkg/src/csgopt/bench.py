"""Benchmark experiment runner.

Each experiment expands into one or more named series (an optimizer with
fixed parameters on a fixed problem). Every replicate draws its starting
point and its sampling seed from counter-based streams keyed by
(base_seed, replicate, purpose), so results are reproducible bit for bit
across platforms and worker pool sizes, and series sharing a base seed see
matched starting points and noise. Replicates may execute on a process
pool; results are collected in replicate order before aggregation, so
parallelism never changes output bytes.
"""

from __future__ import annotations

import dataclasses
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import __version__
from .linesearch import LineSearchConfig
from .optimizers import (
    AdaGrad,
    ConstantStep,
    CsgBacktracking,
    CsgConstant,
    CurvatureScaledCsg,
    IterateTrace,
    OptimizerSpec,
    PowerDecayStep,
    RunConfig,
    Sg,
    run_optimizer,
)
from .testbed import BumpProblem5D, NoisyRosenbrock, QuadraticProblem1D

EXPERIMENTS = ("constant-steps", "stability-grid", "rosenbrock", "single-run")

PROBLEMS = {
    "quad1d": QuadraticProblem1D,
    "bump5d": BumpProblem5D,
    "rosenbrock": NoisyRosenbrock,
}

# Stream purposes under one (base_seed, replicate) namespace.
_PURPOSE_START = 0
_PURPOSE_RUN = 1


def make_problem(name: str):
    try:
        return PROBLEMS[name]()
    except KeyError:
        raise ValueError(f"unknown problem {name!r}") from None


def derive_rng(base_seed: int, replicate: int, purpose: int) -> np.random.Generator:
    """Independent counter-based stream for one replicate and purpose."""
    seq = np.random.SeedSequence([int(base_seed), int(replicate), int(purpose)])
    return np.random.Generator(np.random.Philox(seq))


def replicate_run_seed(base_seed: int, replicate: int) -> int:
    """Sampling seed handed to the optimizer engine for one replicate."""
    seq = np.random.SeedSequence([int(base_seed), int(replicate), _PURPOSE_RUN])
    return int(seq.generate_state(1, np.uint64)[0])


@dataclass
class QuantileSummary:
    """Per-iteration order statistics of a metric across replicates."""

    iterations: np.ndarray
    median: np.ndarray
    p10: np.ndarray
    p25: np.ndarray
    p75: np.ndarray
    p90: np.ndarray


def quantile_aggregate(matrix, iterations=None) -> QuantileSummary:
    """Columnwise quantiles with linear rank interpolation."""
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.size == 0:
        raise ValueError("matrix must be a nonempty 2-D array")
    p10, p25, median, p75, p90 = np.percentile(m, [10, 25, 50, 75, 90], axis=0)
    if iterations is None:
        iterations = np.arange(m.shape[1])
    iterations = np.asarray(iterations, dtype=int)
    if iterations.shape != (m.shape[1],):
        raise ValueError("iterations must match the column count")
    return QuantileSummary(iterations, median, p10, p25, p75, p90)


@dataclass
class ExperimentSpec:
    """Declarative description of one experiment invocation."""

    experiment: str
    replicates: int
    iters: int
    base_seed: int = 12345
    out_path: str | None = None
    fmt: str = "csv"
    optimizers: tuple[str, ...] = ()
    taus: tuple[float, ...] = (0.01, 0.1, 1.0, 1.9, 1.99)
    tau0_grid: tuple[float, ...] | None = None
    d_grid: tuple[float, ...] | None = None
    line_config: LineSearchConfig = LineSearchConfig()
    c_min: float = 1e-8
    c_max: float = 1e8
    bcsg_eta: float = 1.0 / 40.0
    adagrad_tau0: float = 0.1
    adagrad_decay: float = 0.5
    adagrad_eps: float = 1e-8
    problem: str = "quad1d"
    record_approx_errors: bool = False
    threads: int | None = None

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if self.replicates < 1:
            raise ValueError("replicates must be at least 1")
        if self.iters < 1:
            raise ValueError("iters must be at least 1")
        if not (0 <= int(self.base_seed) < 2**64):
            raise ValueError("base_seed must fit in an unsigned 64-bit integer")
        if self.fmt not in ("csv", "json"):
            raise ValueError(f"unknown format {self.fmt!r}")
        if not self.optimizers:
            raise ValueError("at least one optimizer is required")
        known = _SERIES_BUILDERS.get(self.experiment, {})
        for name in self.optimizers:
            if name not in known:
                raise ValueError(
                    f"optimizer {name!r} is not available for {self.experiment}; "
                    f"choose from {sorted(known)}"
                )
        if self.experiment == "single-run" and len(self.optimizers) != 1:
            raise ValueError("single-run takes exactly one optimizer")
        if self.experiment == "constant-steps" and not self.taus:
            raise ValueError("constant-steps needs a nonempty tau list")
        if self.experiment == "stability-grid":
            if not self.tau0_grid or not self.d_grid:
                raise ValueError("stability-grid needs nonempty tau0 and d grids")
        if self.experiment == "single-run" and self.problem not in PROBLEMS:
            raise ValueError(f"unknown problem {self.problem!r}")
        if any(t < 0 for t in self.taus):
            raise ValueError("step sizes must be nonnegative")


def default_spec(experiment: str, full_scale: bool = False) -> ExperimentSpec:
    """Desk-scale defaults per experiment; full_scale selects the large study sizes."""
    if experiment == "constant-steps":
        return ExperimentSpec(
            experiment=experiment,
            replicates=2000 if full_scale else 200,
            iters=500,
            optimizers=("csg", "sg"),
            record_approx_errors=True,
        )
    if experiment == "stability-grid":
        return ExperimentSpec(
            experiment=experiment,
            replicates=1200 if full_scale else 50,
            iters=300,
            optimizers=("bcsg", "adagrad"),
            tau0_grid=tuple(np.geomspace(1e-3, 10.0, 11)),
            d_grid=tuple(np.linspace(0.0, 1.0, 11)),
        )
    if experiment == "rosenbrock":
        return ExperimentSpec(
            experiment=experiment,
            replicates=5000 if full_scale else 100,
            iters=5000 if full_scale else 2000,
            optimizers=("bcsg", "scibl", "adagrad"),
        )
    if experiment == "single-run":
        return ExperimentSpec(
            experiment=experiment,
            replicates=1,
            iters=500,
            optimizers=("csg",),
            taus=(0.1,),
            record_approx_errors=True,
        )
    raise ValueError(f"unknown experiment {experiment!r}")


def _constant_series(spec: ExperimentSpec):
    for name in spec.optimizers:
        for tau in spec.taus:
            if name == "csg":
                yield f"csg-tau-{tau:g}", spec.problem, CsgConstant(tau)
            else:
                yield f"sg-tau-{tau:g}", spec.problem, Sg(ConstantStep(tau))


def _grid_series(spec: ExperimentSpec):
    for name in spec.optimizers:
        for tau0 in spec.tau0_grid:
            for d in spec.d_grid:
                label = f"{name}-tau0-{tau0:.6g}-d-{d:.6g}"
                schedule = PowerDecayStep(tau0, d)
                if name == "bcsg":
                    yield label, "bump5d", CsgBacktracking(schedule, spec.line_config)
                else:
                    yield label, "bump5d", AdaGrad(schedule, spec.adagrad_eps)


def _rosenbrock_series(spec: ExperimentSpec):
    for name in spec.optimizers:
        if name == "bcsg":
            yield "bcsg", "rosenbrock", CsgBacktracking(
                ConstantStep(spec.bcsg_eta), spec.line_config
            )
        elif name == "scibl":
            yield "scibl", "rosenbrock", CurvatureScaledCsg(
                spec.c_min, spec.c_max, spec.line_config
            )
        else:
            yield "adagrad", "rosenbrock", AdaGrad(
                PowerDecayStep(spec.adagrad_tau0, spec.adagrad_decay),
                spec.adagrad_eps,
            )


def _single_run_series(spec: ExperimentSpec):
    name = spec.optimizers[0]
    tau = spec.taus[0]
    if name == "csg":
        optimizer: OptimizerSpec = CsgConstant(tau)
    elif name == "sg":
        optimizer = Sg(ConstantStep(tau))
    elif name == "bcsg":
        if spec.tau0_grid and spec.d_grid:
            schedule: ConstantStep | PowerDecayStep = PowerDecayStep(
                spec.tau0_grid[0], spec.d_grid[0]
            )
        else:
            schedule = ConstantStep(spec.bcsg_eta)
        optimizer = CsgBacktracking(schedule, spec.line_config)
    elif name == "scibl":
        optimizer = CurvatureScaledCsg(spec.c_min, spec.c_max, spec.line_config)
    else:
        optimizer = AdaGrad(
            PowerDecayStep(spec.adagrad_tau0, spec.adagrad_decay), spec.adagrad_eps
        )
    yield name, spec.problem, optimizer


_SERIES_BUILDERS = {
    "constant-steps": {"csg": None, "sg": None},
    "stability-grid": {"bcsg": None, "adagrad": None},
    "rosenbrock": {"bcsg": None, "scibl": None, "adagrad": None},
    "single-run": {"csg": None, "sg": None, "bcsg": None, "scibl": None,
                   "adagrad": None},
}


def resolve_workers(explicit: int | None = None) -> int:
    """Worker count: explicit setting, else CPU count capped by CSGOPT_THREADS."""
    if explicit is not None:
        if explicit < 1:
            raise ValueError("thread count must be at least 1")
        return explicit
    available = os.cpu_count() or 1
    cap = os.environ.get("CSGOPT_THREADS")
    if cap is None or cap == "":
        return available
    try:
        cap_value = int(cap)
    except ValueError:
        raise ValueError("CSGOPT_THREADS must be a positive integer") from None
    if cap_value < 1:
        raise ValueError("CSGOPT_THREADS must be a positive integer")
    return min(available, cap_value)


def _metric_curve(trace: IterateTrace) -> np.ndarray:
    """Tracked metric per iteration count 0..N.

    Distance to the known minimizer where available, otherwise the running
    objective estimate. Entry k is the state after k updates.
    """
    if trace.errors_to_minimizer is not None and trace.final_error is not None:
        return np.append(trace.errors_to_minimizer, trace.final_error)
    return np.append(trace.objective_estimates, trace.objective_estimates[-1])


def _replicate_task(args) -> tuple[np.ndarray, int, np.ndarray | None, np.ndarray | None]:
    problem_name, optimizer, iters, base_seed, replicate, record_errors = args
    problem = make_problem(problem_name)
    u0 = problem.feasible_set().sample(derive_rng(base_seed, replicate, _PURPOSE_START))
    config = RunConfig(
        max_iters=iters,
        seed=replicate_run_seed(base_seed, replicate),
        record_approx_errors=record_errors,
    )
    trace = run_optimizer(optimizer, problem, config, u0)
    return (
        _metric_curve(trace),
        trace.total_refinements,
        trace.objective_errors if record_errors else None,
        trace.gradient_errors if record_errors else None,
    )


@dataclass
class SeriesResult:
    """Raw replicate outputs for one series, in replicate order."""

    name: str
    metrics: np.ndarray
    refinements: np.ndarray
    objective_errors: np.ndarray | None
    gradient_errors: np.ndarray | None

    def summary(self, final_only: bool = False) -> QuantileSummary:
        if final_only:
            last = self.metrics.shape[1] - 1
            return quantile_aggregate(self.metrics[:, -1:], [last])
        return quantile_aggregate(self.metrics)


def run_series(name: str, problem_name: str, optimizer: OptimizerSpec,
               replicates: int, iters: int, base_seed: int,
               record_approx_errors: bool = False,
               workers: int = 1) -> SeriesResult:
    """Execute all replicates of one series and collect outputs in order."""
    tasks = [
        (problem_name, optimizer, iters, base_seed, r, record_approx_errors)
        for r in range(replicates)
    ]
    if workers > 1 and replicates > 1:
        chunk = max(1, replicates // (workers * 4))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(_replicate_task, tasks, chunksize=chunk))
    else:
        outputs = [_replicate_task(t) for t in tasks]
    metrics = np.stack([o[0] for o in outputs])
    refinements = np.array([o[1] for o in outputs], dtype=int)
    obj_errors = grad_errors = None
    if record_approx_errors and outputs[0][2] is not None:
        obj_errors = np.stack([o[2] for o in outputs])
    if record_approx_errors and outputs[0][3] is not None:
        grad_errors = np.stack([o[3] for o in outputs])
    return SeriesResult(name, metrics, refinements, obj_errors, grad_errors)


@dataclass
class ExperimentResult:
    """Everything run_experiment produced, before and after aggregation."""

    spec: ExperimentSpec
    series: list[SeriesResult]
    summaries: dict[str, QuantileSummary]
    refinement_totals: dict[str, int]
    trace: IterateTrace | None
    out_path: str


def _series_definitions(spec: ExperimentSpec):
    builders = {
        "constant-steps": _constant_series,
        "stability-grid": _grid_series,
        "rosenbrock": _rosenbrock_series,
        "single-run": _single_run_series,
    }
    return list(builders[spec.experiment](spec))


def run_experiment(spec: ExperimentSpec) -> ExperimentResult:
    """Run every series of an experiment, write output, print a summary."""
    spec.validate()
    workers = resolve_workers(spec.threads)
    out_path = spec.out_path or f"csgopt-{spec.experiment}.{spec.fmt}"
    final_only = spec.experiment == "stability-grid"

    series_results: list[SeriesResult] = []
    summaries: dict[str, QuantileSummary] = {}
    refinement_totals: dict[str, int] = {}
    trace: IterateTrace | None = None

    if spec.experiment == "single-run":
        name, problem_name, optimizer = _series_definitions(spec)[0]
        problem = make_problem(problem_name)
        u0 = problem.feasible_set().sample(derive_rng(spec.base_seed, 0, _PURPOSE_START))
        config = RunConfig(
            max_iters=spec.iters,
            seed=replicate_run_seed(spec.base_seed, 0),
            record_approx_errors=spec.record_approx_errors,
        )
        trace = run_optimizer(optimizer, problem, config, u0)
        refinement_totals[name] = trace.total_refinements
        _emit_trace(trace, spec, out_path)
        print(f"{name} on {problem_name}: {spec.iters} iterations, "
              f"final residual {trace.residuals[-1]:.6g}, "
              f"{trace.total_refinements} refinements")
    else:
        for name, problem_name, optimizer in _series_definitions(spec):
            result = run_series(
                name, problem_name, optimizer, spec.replicates, spec.iters,
                spec.base_seed, spec.record_approx_errors, workers,
            )
            series_results.append(result)
            summaries[name] = result.summary(final_only=final_only)
            refinement_totals[name] = int(result.refinements.sum())
        emit_output(spec, summaries, refinement_totals, out_path)
        for name, summary in summaries.items():
            print(f"{name}: final median {summary.median[-1]:.6g} "
                  f"(p10 {summary.p10[-1]:.6g}, p90 {summary.p90[-1]:.6g}), "
                  f"refinements {refinement_totals[name]}")
    print(f"wrote {out_path}")
    return ExperimentResult(spec, series_results, summaries, refinement_totals,
                            trace, out_path)


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def _spec_echo(spec: ExperimentSpec) -> dict:
    echo = dataclasses.asdict(spec)
    echo["line_config"] = dataclasses.asdict(spec.line_config)
    for key, value in list(echo.items()):
        if isinstance(value, tuple):
            echo[key] = list(value)
    return echo


def _json_text(value, indent: int = 0) -> str:
    """Minimal JSON writer with fixed 17-significant-digit floats."""
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if isinstance(value, dict):
        if not value:
            return "{}"
        parts = [f'{inner}"{k}": {_json_text(v, indent + 1)}'
                 for k, v in value.items()]
        return "{\n" + ",\n".join(parts) + "\n" + pad + "}"
    if isinstance(value, (list, tuple)):
        if not value:
            return "[]"
        parts = [f"{inner}{_json_text(v, indent + 1)}" for v in value]
        return "[\n" + ",\n".join(parts) + "\n" + pad + "]"
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "null"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        if math.isnan(value):
            return "NaN"
        return _fmt(value)
    raise TypeError(f"cannot serialize {type(value).__name__}")


def _write_text(path: str, text: str) -> None:
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write output file {path}: {exc}") from exc


def emit_output(spec: ExperimentSpec, summaries: dict[str, QuantileSummary],
                refinement_totals: dict[str, int], path: str) -> None:
    """Write aggregated series quantiles as CSV or JSON."""
    if spec.fmt == "csv":
        lines = ["iter,median,p10,p25,p75,p90,series"]
        for name, s in summaries.items():
            for k in range(s.iterations.shape[0]):
                lines.append(
                    f"{int(s.iterations[k])},{_fmt(s.median[k])},{_fmt(s.p10[k])},"
                    f"{_fmt(s.p25[k])},{_fmt(s.p75[k])},{_fmt(s.p90[k])},{name}"
                )
        _write_text(path, "\n".join(lines) + "\n")
        return
    envelope = {
        "experiment": spec.experiment,
        "version": __version__,
        "spec": _spec_echo(spec),
        "refinement_totals": refinement_totals,
        "series": {
            name: {
                "iter": [int(v) for v in s.iterations],
                "median": list(s.median),
                "p10": list(s.p10),
                "p25": list(s.p25),
                "p75": list(s.p75),
                "p90": list(s.p90),
            }
            for name, s in summaries.items()
        },
    }
    _write_text(path, _json_text(envelope) + "\n")


def _emit_trace(trace: IterateTrace, spec: ExperimentSpec, path: str) -> None:
    """Write one raw trace as CSV or JSON."""
    dim = trace.iterates.shape[1]
    columns: dict[str, np.ndarray] = {
        "iter": trace.iterations,
    }
    for i in range(dim):
        columns[f"u{i + 1}"] = trace.iterates[:, i]
    columns["objective_estimate"] = trace.objective_estimates
    columns["gradient_norm"] = trace.gradient_norms
    columns["residual"] = trace.residuals
    columns["step"] = trace.step_sizes
    columns["initial_step"] = trace.initial_steps
    columns["refinements"] = trace.refinements
    if trace.errors_to_minimizer is not None:
        columns["error_to_minimizer"] = trace.errors_to_minimizer
    if trace.objective_errors is not None:
        columns["objective_error"] = trace.objective_errors
    if trace.gradient_errors is not None:
        columns["gradient_error"] = trace.gradient_errors
    if trace.lipschitz_estimates is not None:
        columns["lipschitz_estimate"] = trace.lipschitz_estimates
    if spec.fmt == "csv":
        names = list(columns)
        lines = [",".join(names)]
        rows = trace.iterations.shape[0]
        for k in range(rows):
            cells = []
            for name in names:
                v = columns[name][k]
                if name in ("iter", "refinements"):
                    cells.append(str(int(v)))
                else:
                    cells.append(_fmt(v))
            lines.append(",".join(cells))
        _write_text(path, "\n".join(lines) + "\n")
        return
    envelope = {
        "experiment": spec.experiment,
        "version": __version__,
        "spec": _spec_echo(spec),
        "final_iterate": list(trace.final_iterate),
        "final_error": trace.final_error,
        "stopped_early": trace.stopped_early,
        "trace": {
            name: [int(v) for v in values] if name in ("iter", "refinements")
            else list(values)
            for name, values in columns.items()
        },
    }
    _write_text(path, _json_text(envelope) + "\n")
