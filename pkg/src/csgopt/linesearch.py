"""Step-size tests and the bracketing backtracking refinement.

The refinement searches for a step along the aggregated negative gradient
that passes a nonmonotone Armijo decrease test and, whenever the projection
is inactive at the trial point, a Wolfe style curvature test. Both tests are
evaluated with aggregated estimates from the sample archive rather than
exact objective values, so acceptance is a statement about the current
archive contents.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .history import SampleHistory, _estimate_trusted
from .problems import FeasibleSet, _check_vector

# A trial point counts as interior when it coincides with its unprojected
# preimage up to this absolute tolerance.
PROJECTION_INACTIVE_TOL = 1e-12


@dataclass(frozen=True)
class LineSearchConfig:
    """Parameters of the backtracking refinement.

    max_refinements bounds the number of trial evaluations per call. c1 and
    c2 are the usual Armijo and curvature constants with 0 < c1 < c2 < 1.
    memory is the number of previous aggregated objective values admitted in
    the decrease test in addition to the current one; zero gives the
    monotone test.
    """

    max_refinements: int = 25
    c1: float = 1e-4
    c2: float = 0.9
    memory: int = 1

    def __post_init__(self):
        if self.max_refinements < 1:
            raise ValueError("max_refinements must be at least 1")
        if not (0.0 < self.c1 < self.c2 < 1.0):
            raise ValueError("constants must satisfy 0 < c1 < c2 < 1")
        if self.memory < 0:
            raise ValueError("memory must be nonnegative")


class RefineResult(NamedTuple):
    """Accepted step size and the number of trial evaluations spent."""

    tau: float
    refinements: int


def armijo_condition(
    j_trial: float, j_memory: Sequence[float], g_hat, u, s, c1: float
) -> bool:
    """Nonmonotone sufficient decrease test at a trial point s.

    Accepts when the trial objective estimate is at most the worst recent
    objective estimate reduced by c1 times the linear model decrease along
    u - s.
    """
    values = [float(v) for v in j_memory]
    if not values:
        raise ValueError("j_memory must contain at least one value")
    g_hat = np.asarray(g_hat, dtype=float)
    drop = c1 * float(g_hat @ (np.asarray(u, dtype=float) - np.asarray(s, dtype=float)))
    return bool(float(j_trial) <= max(values) - drop)


def curvature_condition(g_trial, g_hat, u, s, c2: float) -> bool:
    """Directional derivative growth test at a trial point s."""
    g_trial = np.asarray(g_trial, dtype=float)
    g_hat = np.asarray(g_hat, dtype=float)
    step = np.asarray(s, dtype=float) - np.asarray(u, dtype=float)
    if g_trial.shape != step.shape or g_hat.shape != step.shape:
        raise ValueError("gradient and point dimensions disagree")
    return bool(float(g_trial @ step) >= c2 * float(g_hat @ step))


def backtracking_refine(
    history: SampleHistory,
    u,
    g_hat,
    j_memory: Sequence[float],
    eta0: float,
    config: LineSearchConfig,
    feasible_set: FeasibleSet,
) -> RefineResult:
    """Bracketing search for an acceptable step along -g_hat from u.

    Starting from eta0, each trial projects u - eta * g_hat onto the
    feasible set and evaluates the archive estimates there. A failed
    decrease test caps the bracket above; a failed curvature test at an
    interior trial raises it below and records that step as an admissible
    fallback; a trial passing both tests is returned immediately. The next
    candidate is the bracket midpoint once an upper cap exists and twice the
    lower bound before that. If all trials are spent, the last admissible
    fallback is returned when one exists, otherwise the final bracket
    candidate. With no admissible fallback every trial failed the decrease
    test, and the halving chain makes the result exactly eta0 scaled by
    2**-max_refinements.
    """
    u = _check_vector(u, dim=feasible_set.dim, name="u")
    g_hat = _check_vector(g_hat, dim=feasible_set.dim, name="g_hat")
    eta = float(eta0)
    if not (math.isfinite(eta) and eta > 0.0):
        raise ValueError("eta0 must be positive and finite")
    if not j_memory:
        raise ValueError("j_memory must contain at least one value")

    # The decrease and curvature tests below spell out the same expressions
    # as armijo_condition and curvature_condition so accepted steps re-check
    # bit for bit; the memory maximum is hoisted since it is fixed per call,
    # and the trial points cycle through preallocated buffers.
    j_worst = max(float(v) for v in j_memory)
    c1 = config.c1
    c2 = config.c2
    project_into = feasible_set._project_into
    raw = np.empty_like(u)
    point = np.empty_like(u)
    diff = np.empty_like(u)
    lower = 0.0
    upper = math.inf
    admissible = math.inf
    for trial in range(1, config.max_refinements + 1):
        np.multiply(g_hat, -eta, out=raw)
        np.add(raw, u, out=raw)
        project_into(raw, point)
        j_trial, g_trial = _estimate_trusted(history, point)
        np.subtract(u, point, out=diff)
        if not j_trial <= j_worst - c1 * float(g_hat @ diff):
            upper = eta
        else:
            gap = np.subtract(point, raw, out=raw)
            step = np.subtract(point, u, out=diff)
            if (
                math.sqrt(float(gap @ gap)) <= PROJECTION_INACTIVE_TOL
                and not float(g_trial @ step) >= c2 * float(g_hat @ step)
            ):
                lower = eta
                admissible = eta
            else:
                return RefineResult(eta, trial)
        eta = 0.5 * (lower + upper) if upper < math.inf else 2.0 * lower
    if admissible < math.inf:
        return RefineResult(admissible, config.max_refinements)
    return RefineResult(eta, config.max_refinements)


class LipschitzEstimator:
    """Clamped difference quotient tracker for the gradient curvature scale.

    Each update compares the new iterate and aggregated gradient against the
    previous pair and clamps the quotient ||g - g_prev|| / ||u - u_prev||
    into [c_min, c_max]. The first update has no quotient to measure and
    returns c_max; updates with a displacement below the floor keep the
    previous value. Every update stores its arguments as the new previous
    pair.
    """

    DISPLACEMENT_FLOOR = 1e-14

    def __init__(self, c_min: float, c_max: float):
        if not (0.0 < c_min < c_max < math.inf):
            raise ValueError("bounds must satisfy 0 < c_min < c_max < inf")
        self.c_min = float(c_min)
        self.c_max = float(c_max)
        self.current = self.c_max
        self._prev_u: np.ndarray | None = None
        self._prev_g: np.ndarray | None = None

    def update(self, u, g_hat) -> float:
        u = _check_vector(u, name="u")
        g_hat = _check_vector(g_hat, dim=u.shape[0], name="g_hat")
        if self._prev_u is None:
            self.current = self.c_max
        else:
            du = u - self._prev_u
            displacement = math.sqrt(float(du @ du))
            if displacement >= self.DISPLACEMENT_FLOOR:
                dg = g_hat - self._prev_g
                quotient = math.sqrt(float(dg @ dg)) / displacement
                self.current = min(self.c_max, max(self.c_min, quotient))
        self._prev_u = u.copy()
        self._prev_g = g_hat.copy()
        return self.current
