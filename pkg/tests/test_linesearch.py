"""Tests for the step acceptance conditions and the bracketing refinement.

The refinement is driven through hand-built archives whose aggregated
estimates are piecewise constant in the trial point, which pins every
branch of the bracket logic to an exact expected outcome.
"""

import math

import numpy as np
import pytest

from csgopt import (
    Box,
    ConstantStep,
    LineSearchConfig,
    LipschitzEstimator,
    PowerDecayStep,
    SampleHistory,
    armijo_condition,
    backtracking_refine,
    curvature_condition,
    schedule_value,
)


def single_record_history(j, g):
    """Archive whose estimate is (j, g) everywhere."""
    h = SampleHistory(1, 1)
    h.append([0.0], [0.0], j, [g])
    return h


WIDE_BOX = Box(np.array([-1e9]), np.array([1e9]))


class TestArmijoCondition:
    def test_zero_step_accepts_at_equality(self):
        u = [1.0]
        assert armijo_condition(0.5, [0.5], [1.0], u, u, 0.25)

    def test_zero_step_rejects_above_memory(self):
        u = [1.0]
        assert not armijo_condition(0.6, [0.5], [1.0], u, u, 0.25)

    def test_zero_step_accepts_below_memory(self):
        u = [1.0]
        assert armijo_condition(0.4, [0.5], [1.0], u, u, 0.25)

    def test_threshold_arithmetic(self):
        # threshold = 0.5 - 0.25 * (1 * (1 - 0)) = 0.25
        assert armijo_condition(0.2, [0.5], [1.0], [1.0], [0.0], 0.25)
        assert armijo_condition(0.25, [0.5], [1.0], [1.0], [0.0], 0.25)
        assert not armijo_condition(0.3, [0.5], [1.0], [1.0], [0.0], 0.25)

    def test_uses_worst_memory_entry(self):
        # Nonmonotone form: a value above the latest estimate passes as
        # long as it undercuts the worst remembered one.
        u, s = [1.0], [1.0]
        assert armijo_condition(1.0, [0.5, 1.5], [0.0], u, s, 0.1)
        assert not armijo_condition(1.0, [0.5, 0.9], [0.0], u, s, 0.1)

    def test_empty_memory_raises(self):
        with pytest.raises(ValueError):
            armijo_condition(0.0, [], [1.0], [1.0], [0.0], 0.25)


class TestCurvatureCondition:
    def test_zero_step_always_holds(self):
        u = [2.0]
        assert curvature_condition([5.0], [-3.0], u, u, 0.9)

    def test_flattened_gradient_passes(self):
        # step = -1, so -0.5 >= 0.9 * 2 * (-1) = -1.8 holds.
        assert curvature_condition([0.5], [2.0], [1.0], [0.0], 0.9)

    def test_steep_gradient_fails(self):
        # -2 >= -1.8 is false.
        assert not curvature_condition([2.0], [2.0], [1.0], [0.0], 0.9)

    def test_dimension_mismatch_raises(self):
        with pytest.raises(ValueError):
            curvature_condition([1.0, 2.0], [1.0], [1.0], [0.0], 0.9)


class TestLineSearchConfig:
    def test_defaults(self):
        config = LineSearchConfig()
        assert config.max_refinements == 25
        assert config.c1 == 1e-4
        assert config.c2 == 0.9
        assert config.memory == 1

    @pytest.mark.parametrize("kwargs", [
        {"max_refinements": 0},
        {"c1": 0.0},
        {"c1": 0.9, "c2": 0.5},
        {"c2": 1.0},
        {"c1": 0.5, "c2": 0.5},
        {"memory": -1},
    ])
    def test_rejects_invalid(self, kwargs):
        with pytest.raises(ValueError):
            LineSearchConfig(**kwargs)


class TestBacktrackingRefine:
    def test_immediate_accept_returns_initial_step(self):
        history = single_record_history(0.0, 0.0)
        box = Box(np.array([-1.0]), np.array([1.0]))
        result = backtracking_refine(
            history, [0.0], [1.0], [1.0], 0.1, LineSearchConfig(), box)
        assert result.tau == 0.1
        assert result.refinements == 1

    @pytest.mark.parametrize("eta0", [0.1, 1.0, 3.7])
    @pytest.mark.parametrize("trials", [1, 6, 25])
    def test_all_decrease_failures_halve_to_exact_floor(self, eta0, trials):
        # An archive estimating a value far above the memory fails the
        # decrease test at every trial, so the bracket halves down from
        # eta0 and the result is exactly eta0 * 2**-trials.
        history = single_record_history(10.0, 0.0)
        config = LineSearchConfig(max_refinements=trials)
        result = backtracking_refine(
            history, [0.0], [1.0], [0.0], eta0, config, WIDE_BOX)
        assert result.tau == eta0 * 2.0 ** (-trials)
        assert result.refinements == trials

    @pytest.mark.parametrize("trials", [1, 5, 25])
    def test_persistent_curvature_failure_returns_last_doubled_step(self, trials):
        # Decrease always passes and curvature always fails at interior
        # points, so the lower bound doubles each trial; the accepted
        # fallback is the last admissible step eta0 * 2**(trials - 1).
        history = single_record_history(0.0, 2.0)
        config = LineSearchConfig(max_refinements=trials)
        result = backtracking_refine(
            history, [0.0], [1.0], [1e10], 0.1, config, WIDE_BOX)
        assert result.tau == 0.1 * 2.0 ** (trials - 1)
        assert result.refinements == trials

    def test_curvature_skipped_when_projection_active(self):
        # Same archive as the persistent-failure case, but the box clips
        # the trial point, so only the decrease test applies and the
        # initial step is accepted outright.
        history = single_record_history(0.0, 2.0)
        tight = Box(np.array([-0.05]), np.array([0.05]))
        result = backtracking_refine(
            history, [0.0], [1.0], [1e10], 0.1, LineSearchConfig(), tight)
        assert result.tau == 0.1
        assert result.refinements == 1

    def test_bisection_lands_between_bracket_edges(self):
        # Two records split the line at -0.5: estimates jump from
        # (0, [1]) to (100, [1]) across it. Starting at eta0 = 0.6 the
        # first two trials fail the decrease test, the third accepts.
        history = SampleHistory(1, 1)
        history.append([0.0], [0.0], 0.0, [1.0])
        history.append([-1.0], [0.0], 100.0, [1.0])
        result = backtracking_refine(
            history, [0.0], [2.0], [1.0], 0.6, LineSearchConfig(), WIDE_BOX)
        assert result.tau == 0.15
        assert result.refinements == 3

    def test_refinement_count_never_exceeds_budget(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            history = SampleHistory(1, 1)
            for _ in range(5):
                history.append(rng.normal(size=1), rng.normal(size=1),
                               rng.normal(), rng.normal(size=1))
            config = LineSearchConfig(max_refinements=7)
            result = backtracking_refine(
                history, [0.0], [1.0], [rng.normal()], 0.5, config, WIDE_BOX)
            assert 1 <= result.refinements <= 7
            assert result.tau > 0.0

    def test_rejects_bad_initial_step(self):
        history = single_record_history(0.0, 0.0)
        for eta0 in [0.0, -1.0, math.inf, math.nan]:
            with pytest.raises(ValueError):
                backtracking_refine(history, [0.0], [1.0], [0.0], eta0,
                                    LineSearchConfig(), WIDE_BOX)

    def test_rejects_empty_memory(self):
        history = single_record_history(0.0, 0.0)
        with pytest.raises(ValueError):
            backtracking_refine(history, [0.0], [1.0], [], 0.1,
                                LineSearchConfig(), WIDE_BOX)

    def test_rejects_dimension_mismatch(self):
        history = single_record_history(0.0, 0.0)
        with pytest.raises(ValueError):
            backtracking_refine(history, [0.0, 0.0], [1.0, 1.0], [0.0], 0.1,
                                LineSearchConfig(), WIDE_BOX)


class TestScheduleValue:
    def test_constant(self):
        assert schedule_value(ConstantStep(1.9), 7) == 1.9
        assert schedule_value(ConstantStep(0.0), 1) == 0.0

    def test_power_decay_zero_exponent_is_constant(self):
        schedule = PowerDecayStep(1.0, 0.0)
        assert all(schedule_value(schedule, n) == 1.0 for n in (1, 10, 1000))

    def test_power_decay_square_root(self):
        assert schedule_value(PowerDecayStep(0.1, 0.5), 100) == 0.01

    def test_iteration_must_be_positive(self):
        with pytest.raises(ValueError):
            schedule_value(ConstantStep(1.0), 0)

    def test_unknown_schedule_type(self):
        with pytest.raises(TypeError):
            schedule_value(object(), 1)

    @pytest.mark.parametrize("make", [
        lambda: ConstantStep(-0.1),
        lambda: ConstantStep(math.inf),
        lambda: PowerDecayStep(-1.0, 0.5),
        lambda: PowerDecayStep(0.1, 1.5),
        lambda: PowerDecayStep(0.1, -0.5),
    ])
    def test_schedule_validation(self, make):
        with pytest.raises(ValueError):
            make()


class TestLipschitzEstimator:
    def test_first_update_returns_upper_bound(self):
        est = LipschitzEstimator(1e-8, 1e8)
        assert est.update([0.0], [5.0]) == 1e8

    def test_difference_quotient(self):
        est = LipschitzEstimator(1e-8, 1e8)
        est.update([0.0], [0.0])
        assert est.update([1.0], [2.0]) == 2.0

    def test_clamps_above(self):
        est = LipschitzEstimator(1e-8, 1e8)
        est.update([0.0], [0.0])
        # quotient 1 / 1e-12 = 1e12 exceeds the cap
        assert est.update([1e-12], [1.0]) == 1e8

    def test_clamps_below(self):
        est = LipschitzEstimator(1e-8, 1e8)
        est.update([0.0], [3.0])
        assert est.update([1.0], [3.0]) == 1e-8

    def test_tiny_displacement_keeps_previous_value(self):
        est = LipschitzEstimator(1e-8, 1e8)
        est.update([0.0], [0.0])
        est.update([1.0], [2.0])
        assert est.update([1.0 + 1e-15], [100.0]) == 2.0
        # the sub-floor arguments still become the comparison point
        assert est.update([2.0], [102.0]) == pytest.approx(2.0, rel=1e-9)

    def test_current_tracks_last_update(self):
        est = LipschitzEstimator(0.5, 4.0)
        assert est.current == 4.0
        est.update([0.0], [0.0])
        est.update([1.0], [1.0])
        assert est.current == 1.0

    @pytest.mark.parametrize("bounds", [(0.0, 1.0), (-1.0, 1.0), (2.0, 1.0),
                                        (1.0, 1.0), (1.0, math.inf)])
    def test_rejects_bad_bounds(self, bounds):
        with pytest.raises(ValueError):
            LipschitzEstimator(*bounds)
