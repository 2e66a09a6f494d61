"""Constrained stochastic optimization with gradient-sample aggregation.

The package provides projected-descent engines whose search direction is a
reweighted convex combination of every gradient sample drawn so far, plus
classic single-sample baselines, benchmark problems with verification
oracles, and a reproducible experiment runner with a CLI front end.
"""

__version__ = "0.1.0"

from .history import AggregateEstimate, SampleHistory, aggregate, empirical_weights, estimate_at
from .linesearch import (
    LineSearchConfig,
    LipschitzEstimator,
    RefineResult,
    armijo_condition,
    backtracking_refine,
    curvature_condition,
)
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
    StepSchedule,
    run_adagrad,
    run_csg_backtracking,
    run_csg_constant,
    run_csg_curvature_scaled,
    run_optimizer,
    run_sg,
    schedule_value,
    stop_check,
)
from .problems import (
    Ball,
    Box,
    EvaluationError,
    FeasibleSet,
    StochasticProblem,
    stationarity_residual,
)
from .testbed import (
    BumpProblem5D,
    NoisyRosenbrock,
    QuadraticProblem1D,
    finite_difference_check,
    quadrature_oracle,
)

__all__ = [
    "AdaGrad",
    "AggregateEstimate",
    "Ball",
    "Box",
    "BumpProblem5D",
    "ConstantStep",
    "CsgBacktracking",
    "CsgConstant",
    "CurvatureScaledCsg",
    "EvaluationError",
    "FeasibleSet",
    "IterateTrace",
    "LineSearchConfig",
    "LipschitzEstimator",
    "NoisyRosenbrock",
    "OptimizerSpec",
    "PowerDecayStep",
    "QuadraticProblem1D",
    "RefineResult",
    "RunConfig",
    "SampleHistory",
    "Sg",
    "StepSchedule",
    "StochasticProblem",
    "aggregate",
    "armijo_condition",
    "backtracking_refine",
    "curvature_condition",
    "empirical_weights",
    "estimate_at",
    "finite_difference_check",
    "quadrature_oracle",
    "run_adagrad",
    "run_csg_backtracking",
    "run_csg_constant",
    "run_csg_curvature_scaled",
    "run_optimizer",
    "run_sg",
    "schedule_value",
    "stationarity_residual",
    "stop_check",
]
