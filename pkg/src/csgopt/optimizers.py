"""Optimization engines over stochastic problems.

All engines share the same outer shape: draw one parameter sample per
iteration, form a search gradient, take a projected step, and record a
trace row. The gradient-aggregation engines feed every sample into a
:class:`~csgopt.history.SampleHistory` and search along the reweighted
combination of all past gradients, which removes the sampling noise floor
that plain stochastic gradient methods converge to.

Engines:

* ``run_csg_constant``: aggregated gradient with a fixed step size.
* ``run_csg_backtracking``: aggregated gradient with a per-iteration
  bracketing line search started from a scheduled step.
* ``run_csg_curvature_scaled``: the same line search started from the
  reciprocal of a clamped curvature estimate.
* ``run_sg``: projected stochastic gradient with a scheduled step.
* ``run_adagrad``: coordinatewise adaptive scaling of the sampled gradient.
"""

from __future__ import annotations

import math
import warnings
from collections import deque
from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np

from .history import SampleHistory, _estimate_trusted
from .linesearch import (
    LineSearchConfig,
    LipschitzEstimator,
    armijo_condition,
    backtracking_refine,
)
from .problems import (
    EvaluationError,
    StochasticProblem,
    _check_vector,
    stationarity_residual,
)


@dataclass(frozen=True)
class ConstantStep:
    """Schedule returning the same step at every iteration.

    A zero step is allowed and freezes the iterate.
    """

    tau: float

    def __post_init__(self):
        if not (math.isfinite(self.tau) and self.tau >= 0.0):
            raise ValueError("tau must be nonnegative and finite")


@dataclass(frozen=True)
class PowerDecayStep:
    """Schedule tau0 / n**decay with decay in [0, 1]."""

    tau0: float
    decay: float

    def __post_init__(self):
        if not (math.isfinite(self.tau0) and self.tau0 >= 0.0):
            raise ValueError("tau0 must be nonnegative and finite")
        if not (0.0 <= self.decay <= 1.0):
            raise ValueError("decay must lie in [0, 1]")


StepSchedule = Union[ConstantStep, PowerDecayStep]


def schedule_value(schedule: StepSchedule, iteration: int) -> float:
    """Step size of a schedule at a one-based iteration index."""
    if iteration < 1:
        raise ValueError("iteration must be at least 1")
    if isinstance(schedule, ConstantStep):
        return schedule.tau
    if isinstance(schedule, PowerDecayStep):
        return schedule.tau0 / float(iteration) ** schedule.decay
    raise TypeError(f"unknown schedule type {type(schedule).__name__}")


@dataclass(frozen=True)
class RunConfig:
    """Shared run controls.

    stop_residual, when set, ends the run once the unit-step projected
    gradient residual falls to or below it. trace_every keeps one trace row
    per that many iterations (the last executed iteration is always kept).
    record_approx_errors controls whether oracle comparisons are evaluated
    for the trace; disabling it avoids oracle cost on large sweeps.
    """

    max_iters: int
    seed: int
    stop_residual: float | None = None
    trace_every: int = 1
    record_approx_errors: bool = True

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not (0 <= int(self.seed) < 2**64):
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        if self.stop_residual is not None and not (
            math.isfinite(self.stop_residual) and self.stop_residual >= 0.0
        ):
            raise ValueError("stop_residual must be nonnegative and finite")
        if self.trace_every < 1:
            raise ValueError("trace_every must be at least 1")


def stop_check(config: RunConfig, iteration: int, residual: float) -> bool:
    """Whether a run should end after the given iteration."""
    if iteration >= config.max_iters:
        return True
    return config.stop_residual is not None and residual <= config.stop_residual


@dataclass
class IterateTrace:
    """Per-iteration record of a run.

    Row n holds quantities evaluated at the iterate entering iteration n,
    before its update: the search gradient estimate, the unit projected
    gradient residual, the applied step, and optional oracle comparisons.
    final_iterate and final_error describe the point after the last update.
    """

    iterations: np.ndarray
    iterates: np.ndarray
    objective_estimates: np.ndarray
    gradient_norms: np.ndarray
    residuals: np.ndarray
    step_sizes: np.ndarray
    initial_steps: np.ndarray
    refinements: np.ndarray
    errors_to_minimizer: np.ndarray | None
    objective_errors: np.ndarray | None
    gradient_errors: np.ndarray | None
    lipschitz_estimates: np.ndarray | None
    steps_verified: np.ndarray | None
    final_iterate: np.ndarray
    final_error: float | None
    stopped_early: bool
    total_refinements: int


class _Decision(NamedTuple):
    step: float
    refinements: int
    initial_step: float
    lipschitz: float
    verified: bool | None


class _TraceBuilder:
    def __init__(self, problem: StochasticProblem, config: RunConfig):
        self._config = config
        self._problem = problem
        self._minimizer = problem.known_minimizer()
        self._oracle_checked = False
        self._has_objective_oracle = False
        self._has_gradient_oracle = False
        self._rows: list[tuple] = []
        self.total_refinements = 0
        self._any_lipschitz = False
        self._any_verified = False

    def add(self, n: int, u: np.ndarray, j_hat: float, g_hat: np.ndarray,
            residual: float, decision: _Decision, last: bool) -> None:
        self.total_refinements += decision.refinements
        if decision.verified is not None:
            self._any_verified = True
        if not math.isnan(decision.lipschitz):
            self._any_lipschitz = True
        if n % self._config.trace_every != 0 and not last:
            return
        err_min = math.nan
        if self._minimizer is not None:
            off = u - self._minimizer
            err_min = math.sqrt(float(off @ off))
        err_obj = math.nan
        err_grad = math.nan
        if self._config.record_approx_errors:
            if not self._oracle_checked:
                self._oracle_checked = True
                self._has_objective_oracle = self._problem.true_objective(u) is not None
                self._has_gradient_oracle = self._problem.true_gradient(u) is not None
            if self._has_objective_oracle:
                err_obj = abs(j_hat - float(self._problem.true_objective(u)))
            if self._has_gradient_oracle:
                err_grad = float(
                    np.linalg.norm(g_hat - self._problem.true_gradient(u))
                )
        self._rows.append(
            (n, u.copy(), j_hat, math.sqrt(float(g_hat @ g_hat)), residual,
             decision.step, decision.initial_step, decision.refinements,
             err_min, err_obj, err_grad, decision.lipschitz, decision.verified)
        )

    def finish(self, final_u: np.ndarray, stopped_early: bool) -> IterateTrace:
        cols = list(zip(*self._rows))
        final_error = None
        if self._minimizer is not None:
            final_error = float(np.linalg.norm(final_u - self._minimizer))
        err_min = np.array(cols[8]) if self._minimizer is not None else None
        err_obj = np.array(cols[9])
        err_grad = np.array(cols[10])
        return IterateTrace(
            iterations=np.array(cols[0], dtype=int),
            iterates=np.array(cols[1]),
            objective_estimates=np.array(cols[2]),
            gradient_norms=np.array(cols[3]),
            residuals=np.array(cols[4]),
            step_sizes=np.array(cols[5]),
            initial_steps=np.array(cols[6]),
            refinements=np.array(cols[7], dtype=int),
            errors_to_minimizer=err_min,
            objective_errors=err_obj if not np.all(np.isnan(err_obj)) else None,
            gradient_errors=err_grad if not np.all(np.isnan(err_grad)) else None,
            lipschitz_estimates=np.array(cols[11]) if self._any_lipschitz else None,
            steps_verified=np.array(cols[12], dtype=bool) if self._any_verified else None,
            final_iterate=final_u.copy(),
            final_error=final_error,
            stopped_early=stopped_early,
            total_refinements=self.total_refinements,
        )


def _make_rng(seed: int) -> np.random.Generator:
    # Philox is counter based, which keeps streams identical across
    # platforms and independent of how many draws other streams consumed.
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def _draw_sample(problem: StochasticProblem, rng: np.random.Generator,
                 u: np.ndarray, n: int):
    x = _check_vector(problem.sample_param(rng), dim=problem.dim_param, name="x")
    j = float(problem.eval_integrand(u, x))
    g = np.asarray(problem.eval_integrand_grad(u, x), dtype=float)
    if not (np.isfinite(j) and np.all(np.isfinite(g))):
        raise EvaluationError(f"non-finite integrand values at iteration {n}")
    return x, j, g


class _ConstantRule:
    def __init__(self, tau: float):
        self.tau = float(tau)

    def choose(self, n, u, j_hat, g_hat, history, feasible_set) -> _Decision:
        return _Decision(self.tau, 0, self.tau, math.nan, None)


class _BacktrackingRule:
    """Line-searched step with a nonmonotone objective memory."""

    def __init__(self, line_config: LineSearchConfig, verify: bool):
        self.line_config = line_config
        self.verify = verify
        self.memory: deque[float] = deque(maxlen=line_config.memory + 1)

    def _initial_step(self, n, u, g_hat) -> float:
        raise NotImplementedError

    def choose(self, n, u, j_hat, g_hat, history, feasible_set) -> _Decision:
        self.memory.append(j_hat)
        eta0 = self._initial_step(n, u, g_hat)
        result = backtracking_refine(history, u, g_hat, tuple(self.memory),
                                     eta0, self.line_config, feasible_set)
        verified = None
        if self.verify:
            verified = self._recheck(history, feasible_set, u, g_hat,
                                     result.tau, eta0)
        return _Decision(result.tau, result.refinements, eta0,
                         self._lipschitz_value(), verified)

    def _lipschitz_value(self) -> float:
        return math.nan

    def _recheck(self, history, feasible_set, u, g_hat, step, eta0) -> bool:
        # An accepted step must either satisfy the decrease test when
        # re-evaluated against the frozen archive, or be the exact result of
        # exhausting every trial on the halving branch.
        if step == eta0 * 2.0 ** (-self.line_config.max_refinements):
            return True
        point = feasible_set.project(u - step * g_hat)
        j_trial, _ = _estimate_trusted(history, point)
        return armijo_condition(j_trial, tuple(self.memory), g_hat, u, point,
                                self.line_config.c1)


class _ScheduledBacktrackingRule(_BacktrackingRule):
    def __init__(self, schedule: StepSchedule, line_config: LineSearchConfig,
                 verify: bool):
        super().__init__(line_config, verify)
        self.schedule = schedule

    def _initial_step(self, n, u, g_hat) -> float:
        return schedule_value(self.schedule, n)


class _CurvatureScaledRule(_BacktrackingRule):
    def __init__(self, c_min: float, c_max: float,
                 line_config: LineSearchConfig, verify: bool):
        super().__init__(line_config, verify)
        self.estimator = LipschitzEstimator(c_min, c_max)

    def _initial_step(self, n, u, g_hat) -> float:
        return 1.0 / self.estimator.update(u, g_hat)

    def _lipschitz_value(self) -> float:
        return self.estimator.current


def _aggregated_loop(problem: StochasticProblem, config: RunConfig,
                     u0, rule) -> IterateTrace:
    feasible_set = problem.feasible_set()
    u = _check_vector(u0, dim=feasible_set.dim, name="u0")
    if not feasible_set.contains(u):
        raise ValueError("u0 must lie in the feasible set")
    rng = _make_rng(config.seed)
    history = SampleHistory(problem.dim_design, problem.dim_param,
                            capacity=config.max_iters)
    builder = _TraceBuilder(problem, config)
    stopped_early = False
    for n in range(1, config.max_iters + 1):
        x, j, g = _draw_sample(problem, rng, u, n)
        history.append(u, x, j, g)
        j_hat, g_hat = _estimate_trusted(history, u)
        decision = rule.choose(n, u, j_hat, g_hat, history, feasible_set)
        moved = feasible_set.project(u - g_hat) - u
        residual = math.sqrt(float(moved @ moved))
        stopping = stop_check(config, n, residual)
        builder.add(n, u, j_hat, g_hat, residual, decision, last=stopping)
        u = feasible_set.project(u - decision.step * g_hat)
        if stopping:
            stopped_early = n < config.max_iters
            break
    return builder.finish(u, stopped_early)


def run_csg_constant(problem: StochasticProblem, tau: float,
                     config: RunConfig, u0) -> IterateTrace:
    """Aggregated-gradient descent with a fixed step size.

    Emits an advisory warning when the step reaches the classical stability
    bound 2/L for problems with a known gradient Lipschitz constant. A zero
    step freezes the iterate.
    """
    if not (math.isfinite(tau) and tau >= 0.0):
        raise ValueError("tau must be nonnegative and finite")
    lipschitz = problem.known_lipschitz()
    if lipschitz is not None and tau >= 2.0 / lipschitz:
        warnings.warn(
            f"constant step {tau} is at or above the stability bound "
            f"{2.0 / lipschitz} for this problem",
            stacklevel=2,
        )
    return _aggregated_loop(problem, config, u0, _ConstantRule(tau))


def run_csg_backtracking(problem: StochasticProblem, schedule: StepSchedule,
                         config: RunConfig, u0,
                         line_config: LineSearchConfig = LineSearchConfig(),
                         *, verify_steps: bool = False) -> IterateTrace:
    """Aggregated-gradient descent with a bracketing line search.

    The search at iteration n starts from the scheduled step. With
    verify_steps the accepted step of every iteration is rechecked against
    the frozen archive and the outcome lands in trace.steps_verified.
    """
    rule = _ScheduledBacktrackingRule(schedule, line_config, verify_steps)
    return _aggregated_loop(problem, config, u0, rule)


def run_csg_curvature_scaled(problem: StochasticProblem, config: RunConfig,
                             u0, c_min: float = 1e-8, c_max: float = 1e8,
                             line_config: LineSearchConfig = LineSearchConfig(),
                             *, verify_steps: bool = False) -> IterateTrace:
    """Line-searched aggregated-gradient descent with curvature scaling.

    The search starts from the reciprocal of a clamped difference-quotient
    curvature estimate, so step sizes track the local gradient variation
    instead of a hand-tuned schedule. Trace rows carry the estimate in
    lipschitz_estimates.
    """
    rule = _CurvatureScaledRule(c_min, c_max, line_config, verify_steps)
    return _aggregated_loop(problem, config, u0, rule)


def _sampled_loop(problem: StochasticProblem, config: RunConfig, u0,
                  direction) -> IterateTrace:
    feasible_set = problem.feasible_set()
    u = _check_vector(u0, dim=feasible_set.dim, name="u0")
    if not feasible_set.contains(u):
        raise ValueError("u0 must lie in the feasible set")
    rng = _make_rng(config.seed)
    builder = _TraceBuilder(problem, config)
    stopped_early = False
    for n in range(1, config.max_iters + 1):
        x, j, g = _draw_sample(problem, rng, u, n)
        tau, move = direction(n, g)
        decision = _Decision(tau, 0, tau, math.nan, None)
        residual = stationarity_residual(feasible_set, u, g, 1.0)
        stopping = stop_check(config, n, residual)
        builder.add(n, u, j, g, residual, decision, last=stopping)
        u = feasible_set.project(u - tau * move)
        if stopping:
            stopped_early = n < config.max_iters
            break
    return builder.finish(u, stopped_early)


def run_sg(problem: StochasticProblem, schedule: StepSchedule,
           config: RunConfig, u0) -> IterateTrace:
    """Projected stochastic gradient descent on single samples."""

    def direction(n: int, g: np.ndarray):
        return schedule_value(schedule, n), g

    return _sampled_loop(problem, config, u0, direction)


def run_adagrad(problem: StochasticProblem, schedule: StepSchedule,
                config: RunConfig, u0, eps: float = 1e-8) -> IterateTrace:
    """Projected stochastic gradient with coordinatewise adaptive scaling.

    Divides each gradient coordinate by the root of its accumulated square,
    plus eps for numerical safety.
    """
    if not (math.isfinite(eps) and eps > 0.0):
        raise ValueError("eps must be positive and finite")
    accumulator = np.zeros(problem.dim_design)

    def direction(n: int, g: np.ndarray):
        accumulator[:] += g * g
        return schedule_value(schedule, n), g / (np.sqrt(accumulator) + eps)

    return _sampled_loop(problem, config, u0, direction)


@dataclass(frozen=True)
class CsgConstant:
    tau: float


@dataclass(frozen=True)
class CsgBacktracking:
    schedule: StepSchedule
    line_config: LineSearchConfig = LineSearchConfig()


@dataclass(frozen=True)
class CurvatureScaledCsg:
    c_min: float = 1e-8
    c_max: float = 1e8
    line_config: LineSearchConfig = LineSearchConfig()


@dataclass(frozen=True)
class Sg:
    schedule: StepSchedule


@dataclass(frozen=True)
class AdaGrad:
    schedule: StepSchedule
    eps: float = 1e-8


OptimizerSpec = Union[CsgConstant, CsgBacktracking, CurvatureScaledCsg, Sg, AdaGrad]


def run_optimizer(spec: OptimizerSpec, problem: StochasticProblem,
                  config: RunConfig, u0, *,
                  verify_steps: bool = False) -> IterateTrace:
    """Dispatch a declarative optimizer description to its engine."""
    if isinstance(spec, CsgConstant):
        return run_csg_constant(problem, spec.tau, config, u0)
    if isinstance(spec, CsgBacktracking):
        return run_csg_backtracking(problem, spec.schedule, config, u0,
                                    spec.line_config, verify_steps=verify_steps)
    if isinstance(spec, CurvatureScaledCsg):
        return run_csg_curvature_scaled(problem, config, u0, spec.c_min,
                                        spec.c_max, spec.line_config,
                                        verify_steps=verify_steps)
    if isinstance(spec, Sg):
        return run_sg(problem, spec.schedule, config, u0)
    if isinstance(spec, AdaGrad):
        return run_adagrad(problem, spec.schedule, config, u0, spec.eps)
    raise TypeError(f"unknown optimizer spec {type(spec).__name__}")
