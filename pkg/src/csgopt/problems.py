"""Feasible sets, projections, and the stochastic problem interface.

A problem supplies pointwise evaluations of an integrand j(u, x) and its
design gradient, together with a sampler for the random parameter x. The
expectation J(u) = E[j(u, x)] is never evaluated directly by the optimizers;
problems may expose it through optional oracle hooks for diagnostics.
"""

from __future__ import annotations

import abc
import math
from dataclasses import dataclass

import numpy as np


class EvaluationError(RuntimeError):
    """Raised when a problem evaluation produces non-finite values."""


def _check_vector(v, dim: int | None = None, name: str = "v") -> np.ndarray:
    """Coerce to a finite 1-D float array, optionally of fixed length."""
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a 1-D vector, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise ValueError(f"{name} must have length {dim}, got {arr.shape[0]}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} must be finite")
    return arr


class FeasibleSet(abc.ABC):
    """Closed convex set supporting projection, membership, and sampling."""

    @property
    @abc.abstractmethod
    def dim(self) -> int:
        """Ambient dimension."""

    @abc.abstractmethod
    def project(self, v) -> np.ndarray:
        """Euclidean projection of v onto the set."""

    @abc.abstractmethod
    def contains(self, u, tol: float = 1e-12) -> bool:
        """Whether u lies in the set up to tolerance tol."""

    @abc.abstractmethod
    def sample(self, rng: np.random.Generator) -> np.ndarray:
        """Draw a point from the set (uniformly for boxes)."""

    def _project_into(self, v: np.ndarray, out: np.ndarray) -> np.ndarray:
        """Projection for trusted internal callers, written into out.

        Hot loops call this once per line-search trial with preallocated
        buffers; subclasses may override it to skip validation and
        allocation. The result must match project(v) bit for bit.
        """
        np.copyto(out, self.project(v))
        return out


@dataclass(frozen=True, eq=False)
class Box(FeasibleSet):
    """Axis-aligned box {u : lower <= u <= upper} with lower < upper."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = _check_vector(self.lower, name="lower")
        hi = _check_vector(self.upper, dim=lo.shape[0], name="upper")
        if not np.all(lo < hi):
            raise ValueError("box must satisfy lower < upper componentwise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def project(self, v) -> np.ndarray:
        v = _check_vector(v, dim=self.dim, name="v")
        return np.minimum(np.maximum(v, self.lower), self.upper)

    def _project_into(self, v: np.ndarray, out: np.ndarray) -> np.ndarray:
        np.maximum(v, self.lower, out=out)
        return np.minimum(out, self.upper, out=out)

    def contains(self, u, tol: float = 1e-12) -> bool:
        u = _check_vector(u, dim=self.dim, name="u")
        return bool((u >= self.lower - tol).all() and (u <= self.upper + tol).all())

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lower, self.upper)


@dataclass(frozen=True, eq=False)
class Ball(FeasibleSet):
    """Euclidean ball {u : ||u - center|| <= radius} with radius > 0."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = _check_vector(self.center, name="center")
        r = float(self.radius)
        if not np.isfinite(r) or r <= 0.0:
            raise ValueError("radius must be positive and finite")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", r)

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def project(self, v) -> np.ndarray:
        v = _check_vector(v, dim=self.dim, name="v")
        offset = v - self.center
        dist = float(np.linalg.norm(offset))
        if dist <= self.radius:
            # Interior points (including the center itself) are fixed points.
            return v.copy()
        return self.center + offset * (self.radius / dist)

    def contains(self, u, tol: float = 1e-12) -> bool:
        u = _check_vector(u, dim=self.dim, name="u")
        return float(np.linalg.norm(u - self.center)) <= self.radius + tol

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        # Rejection-free draw: uniform direction scaled by a radius with the
        # correct volumetric density.
        d = self.dim
        direction = rng.standard_normal(d)
        norm = float(np.linalg.norm(direction))
        if norm == 0.0:
            return self.center.copy()
        radius = self.radius * rng.uniform() ** (1.0 / d)
        return self.center + direction * (radius / norm)


def stationarity_residual(feasible_set: FeasibleSet, u, g, t: float = 1.0) -> float:
    """Norm of the projected-gradient step ||P(u - t*g) - u||.

    Zero exactly at points satisfying the first-order optimality condition
    for minimizing a function with gradient g over the set.
    """
    if not (np.isfinite(t) and t > 0.0):
        raise ValueError("t must be positive and finite")
    u = _check_vector(u, dim=feasible_set.dim, name="u")
    g = _check_vector(g, dim=feasible_set.dim, name="g")
    moved = feasible_set.project(u - t * g) - u
    return math.sqrt(float(moved @ moved))


class StochasticProblem(abc.ABC):
    """Expectation-minimization problem min_u E[j(u, x)] over a feasible set.

    Subclasses fix the design dimension ``dim_design`` and parameter
    dimension ``dim_param`` and implement pointwise evaluation. The oracle
    hooks return None when no closed form (or trusted numerical scheme) is
    available.
    """

    dim_design: int
    dim_param: int

    @abc.abstractmethod
    def feasible_set(self) -> FeasibleSet:
        """The constraint set for the design variable."""

    @abc.abstractmethod
    def sample_param(self, rng: np.random.Generator) -> np.ndarray:
        """Draw one random parameter realization x."""

    @abc.abstractmethod
    def eval_integrand(self, u, x) -> float:
        """Evaluate j(u, x)."""

    @abc.abstractmethod
    def eval_integrand_grad(self, u, x) -> np.ndarray:
        """Evaluate the gradient of j with respect to u at (u, x)."""

    def eval_integrand_batch(self, u, xs) -> np.ndarray:
        """Integrand values at one design point over rows of xs."""
        return np.array([self.eval_integrand(u, x) for x in np.asarray(xs)])

    def eval_integrand_grad_batch(self, u, xs) -> np.ndarray:
        """Integrand gradients at one design point over rows of xs."""
        return np.stack([self.eval_integrand_grad(u, x) for x in np.asarray(xs)])

    def true_objective(self, u) -> float | None:
        return None

    def true_gradient(self, u) -> np.ndarray | None:
        return None

    def known_minimizer(self) -> np.ndarray | None:
        return None

    def known_lipschitz(self) -> float | None:
        """Lipschitz constant of the objective gradient, if known."""
        return None
