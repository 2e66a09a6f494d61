"""Benchmark problems with analytic or quadrature oracles.

Three problems of increasing difficulty:

* :class:`QuadraticProblem1D`: a strictly convex scalar tracking problem
  with a closed-form objective, minimizer, and curvature.
* :class:`BumpProblem5D`: a five-dimensional inverted bump with a large flat
  region far from the minimizer; the objective oracle integrates on a cached
  tensor grid since no closed form is available.
* :class:`NoisyRosenbrock`: the two-dimensional Rosenbrock valley under
  multiplicative Gaussian noise; the noise has unit mean, so the expected
  objective is the classic deterministic Rosenbrock function.

The module also provides quadrature and finite-difference verification
helpers used to cross-check every analytic gradient and oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problems import Box, FeasibleSet, StochasticProblem, _check_vector

# Gauss-Hermite nodes beyond this magnitude are discarded; the weights are
# renormalized so the rule still integrates constants exactly. Sampling is
# never truncated, only the quadrature.
GAUSSIAN_TRUNCATION = 8.0


@dataclass(frozen=True, eq=False)
class UniformBoxSampler:
    """Uniform distribution on a box, with a midpoint tensor rule."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = _check_vector(self.lower, name="lower")
        hi = _check_vector(self.upper, dim=lo.shape[0], name="upper")
        if not np.all(lo < hi):
            raise ValueError("support must satisfy lower < upper componentwise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def mean(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def variance(self) -> np.ndarray:
        return (self.upper - self.lower) ** 2 / 12.0

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lower, self.upper)

    def quadrature(self, nodes_per_dim: int) -> tuple[np.ndarray, np.ndarray]:
        """Tensor-product midpoint nodes and probability weights."""
        if nodes_per_dim < 2:
            raise ValueError("nodes_per_dim must be at least 2")
        axes = [
            lo + (np.arange(nodes_per_dim) + 0.5) * (hi - lo) / nodes_per_dim
            for lo, hi in zip(self.lower, self.upper)
        ]
        mesh = np.meshgrid(*axes, indexing="ij")
        nodes = np.stack([m.ravel() for m in mesh], axis=1)
        weights = np.full(nodes.shape[0], 1.0 / nodes.shape[0])
        return nodes, weights


@dataclass(frozen=True)
class StandardNormalSampler:
    """Scalar standard normal, with a truncated Gauss-Hermite rule."""

    @property
    def dim(self) -> int:
        return 1

    def mean(self) -> np.ndarray:
        return np.zeros(1)

    def variance(self) -> np.ndarray:
        return np.ones(1)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return rng.standard_normal(1)

    def quadrature(self, nodes_per_dim: int) -> tuple[np.ndarray, np.ndarray]:
        """Probabilists' Gauss-Hermite nodes inside the truncation window."""
        if nodes_per_dim < 2:
            raise ValueError("nodes_per_dim must be at least 2")
        x, w = np.polynomial.hermite_e.hermegauss(nodes_per_dim)
        keep = np.abs(x) <= GAUSSIAN_TRUNCATION
        x, w = x[keep], w[keep]
        return x[:, None], w / w.sum()


class QuadraticProblem1D(StochasticProblem):
    """Track a uniform random target: j(u, x) = (u - x)^2 / 2.

    With x uniform on (-1/2, 1/2) the objective is J(u) = u^2/2 + 1/24 on
    U = [-1/2, 1/2], so the minimizer is 0 and the gradient u has Lipschitz
    constant exactly 1.
    """

    dim_design = 1
    dim_param = 1

    def __init__(self):
        half = np.array([0.5])
        self._set = Box(-half, half)
        self.param_distribution = UniformBoxSampler(-half, half)

    def feasible_set(self) -> FeasibleSet:
        return self._set

    def sample_param(self, rng: np.random.Generator) -> np.ndarray:
        return self.param_distribution.sample(rng)

    def eval_integrand(self, u, x) -> float:
        return 0.5 * float(u[0] - x[0]) ** 2

    def eval_integrand_grad(self, u, x) -> np.ndarray:
        return np.array([float(u[0] - x[0])])

    def eval_integrand_batch(self, u, xs) -> np.ndarray:
        return 0.5 * (float(u[0]) - np.asarray(xs)[:, 0]) ** 2

    def eval_integrand_grad_batch(self, u, xs) -> np.ndarray:
        return (float(u[0]) - np.asarray(xs)[:, 0])[:, None]

    def true_objective(self, u) -> float:
        return 0.5 * float(u[0]) ** 2 + 1.0 / 24.0

    def true_gradient(self, u) -> np.ndarray:
        return np.asarray(u, dtype=float).copy()

    def known_minimizer(self) -> np.ndarray:
        return np.zeros(1)

    def known_lipschitz(self) -> float:
        return 1.0


class BumpProblem5D(StochasticProblem):
    """Inverted bump in five dimensions: j(u, x) = -20 / (1 + ||u - x||^2).

    The noise x is uniform on (-1, 1)^5 while the design box [-10, 10]^5 is
    much larger, leaving wide plateaus where gradients nearly vanish. By
    symmetry the minimizer is the origin. The objective oracle evaluates the
    expectation on a cached midpoint tensor grid and differentiates under
    the integral on the same grid.
    """

    dim_design = 5
    dim_param = 5

    def __init__(self, oracle_nodes_per_dim: int = 9):
        if oracle_nodes_per_dim < 2:
            raise ValueError("oracle_nodes_per_dim must be at least 2")
        self._set = Box(np.full(5, -10.0), np.full(5, 10.0))
        self.param_distribution = UniformBoxSampler(np.full(5, -1.0), np.full(5, 1.0))
        self.oracle_nodes_per_dim = int(oracle_nodes_per_dim)
        self._grid: tuple[np.ndarray, np.ndarray] | None = None

    def feasible_set(self) -> FeasibleSet:
        return self._set

    def sample_param(self, rng: np.random.Generator) -> np.ndarray:
        return self.param_distribution.sample(rng)

    def eval_integrand(self, u, x) -> float:
        diff = np.asarray(u, dtype=float) - np.asarray(x, dtype=float)
        return -20.0 / (1.0 + float(diff @ diff))

    def eval_integrand_grad(self, u, x) -> np.ndarray:
        diff = np.asarray(u, dtype=float) - np.asarray(x, dtype=float)
        return 40.0 * diff / (1.0 + float(diff @ diff)) ** 2

    def eval_integrand_batch(self, u, xs) -> np.ndarray:
        diff = np.asarray(u, dtype=float) - np.asarray(xs, dtype=float)
        return -20.0 / (1.0 + np.einsum("ij,ij->i", diff, diff))

    def eval_integrand_grad_batch(self, u, xs) -> np.ndarray:
        diff = np.asarray(u, dtype=float) - np.asarray(xs, dtype=float)
        q = 1.0 + np.einsum("ij,ij->i", diff, diff)
        return 40.0 * diff / (q * q)[:, None]

    def _oracle_grid(self) -> tuple[np.ndarray, np.ndarray]:
        if self._grid is None:
            self._grid = self.param_distribution.quadrature(self.oracle_nodes_per_dim)
        return self._grid

    def true_objective(self, u) -> float:
        nodes, weights = self._oracle_grid()
        return float(weights @ self.eval_integrand_batch(u, nodes))

    def true_gradient(self, u) -> np.ndarray:
        nodes, weights = self._oracle_grid()
        return self.eval_integrand_grad_batch(u, nodes).T @ weights

    def known_minimizer(self) -> np.ndarray:
        return np.zeros(5)


class NoisyRosenbrock(StochasticProblem):
    """Rosenbrock valley under multiplicative unit-mean Gaussian noise.

    j(u, x) = (1 + x) * ((1 - u_1)^2 + 100 (u_2 - u_1^2)^2) with scalar
    x ~ N(0, 1), so J(u) is the deterministic Rosenbrock function with its
    single stationary point at (1, 1). The design box is [-3, 3]^2.
    """

    dim_design = 2
    dim_param = 1

    def __init__(self):
        self._set = Box(np.full(2, -3.0), np.full(2, 3.0))
        self.param_distribution = StandardNormalSampler()

    def feasible_set(self) -> FeasibleSet:
        return self._set

    def sample_param(self, rng: np.random.Generator) -> np.ndarray:
        return self.param_distribution.sample(rng)

    @staticmethod
    def _rosenbrock(u) -> float:
        u1, u2 = float(u[0]), float(u[1])
        return (1.0 - u1) ** 2 + 100.0 * (u2 - u1 * u1) ** 2

    @staticmethod
    def _rosenbrock_grad(u) -> np.ndarray:
        u1, u2 = float(u[0]), float(u[1])
        return np.array([
            -2.0 * (1.0 - u1) - 400.0 * u1 * (u2 - u1 * u1),
            200.0 * (u2 - u1 * u1),
        ])

    def eval_integrand(self, u, x) -> float:
        return (1.0 + float(x[0])) * self._rosenbrock(u)

    def eval_integrand_grad(self, u, x) -> np.ndarray:
        return (1.0 + float(x[0])) * self._rosenbrock_grad(u)

    def eval_integrand_batch(self, u, xs) -> np.ndarray:
        return (1.0 + np.asarray(xs)[:, 0]) * self._rosenbrock(u)

    def eval_integrand_grad_batch(self, u, xs) -> np.ndarray:
        return (1.0 + np.asarray(xs)[:, 0])[:, None] * self._rosenbrock_grad(u)

    def true_objective(self, u) -> float:
        return self._rosenbrock(u)

    def true_gradient(self, u) -> np.ndarray:
        return self._rosenbrock_grad(u)

    def known_minimizer(self) -> np.ndarray:
        return np.ones(2)


def quadrature_oracle(problem: StochasticProblem, u, nodes_per_dim: int
                      ) -> tuple[float, np.ndarray]:
    """Expectation of the integrand and its gradient by numerical quadrature.

    Uses the problem's declared parameter distribution (midpoint rule on a
    box, truncated Gauss-Hermite for a Gaussian). Converges to the analytic
    oracle as nodes_per_dim grows.
    """
    if nodes_per_dim < 2:
        raise ValueError("nodes_per_dim must be at least 2")
    u = _check_vector(u, dim=problem.dim_design, name="u")
    distribution = getattr(problem, "param_distribution", None)
    if distribution is None:
        raise TypeError("problem does not declare a parameter distribution")
    nodes, weights = distribution.quadrature(nodes_per_dim)
    j = float(weights @ problem.eval_integrand_batch(u, nodes))
    grad = problem.eval_integrand_grad_batch(u, nodes).T @ weights
    return j, grad


# Components with analytic gradient magnitude below this floor are compared
# absolutely; relative error is meaningless against a vanishing reference.
_FD_ABSOLUTE_FLOOR = 1e-8


def finite_difference_check(problem: StochasticProblem, u, x, h: float) -> float:
    """Max discrepancy between central differences and the analytic gradient.

    Componentwise relative error, falling back to absolute error where the
    analytic component is below a small floor. Requires u to sit inside the
    feasible set with margin h in every coordinate direction.
    """
    if not (np.isfinite(h) and h > 0.0):
        raise ValueError("h must be positive and finite")
    feasible_set = problem.feasible_set()
    u = _check_vector(u, dim=feasible_set.dim, name="u")
    x = _check_vector(x, dim=problem.dim_param, name="x")
    grad = np.asarray(problem.eval_integrand_grad(u, x), dtype=float)
    worst = 0.0
    for i in range(u.shape[0]):
        shift = np.zeros_like(u)
        shift[i] = h
        if not (feasible_set.contains(u + shift, tol=0.0)
                and feasible_set.contains(u - shift, tol=0.0)):
            raise ValueError("u must be interior to the feasible set by margin h")
        fd = (problem.eval_integrand(u + shift, x)
              - problem.eval_integrand(u - shift, x)) / (2.0 * h)
        err = abs(fd - grad[i])
        if abs(grad[i]) >= _FD_ABSOLUTE_FLOOR:
            err /= abs(grad[i])
        worst = max(worst, err)
    return worst
