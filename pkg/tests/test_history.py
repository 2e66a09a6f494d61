"""Tests for the sample archive and the nearest-record vote weights."""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from csgopt import SampleHistory, aggregate, empirical_weights, estimate_at


def brute_force_weights(history, u):
    """Literal transcription of the vote definition, used as the oracle.

    Every stored parameter x_i votes for the record m minimizing
    ||u - u_m|| + ||x_i - x_m||; ties go to the lowest record index
    (np.argmin). The weight of a record is its share of the votes.
    """
    u = np.asarray(u, dtype=float)
    us = history.design_points
    xs = history.param_samples
    n = len(history)
    d_u = np.linalg.norm(us - u, axis=1)
    counts = np.zeros(n)
    for i in range(n):
        keys = d_u + np.linalg.norm(xs - xs[i], axis=1)
        counts[np.argmin(keys)] += 1.0
    return counts / n


def fill_history(history, rng, count, u_scale=1.0, x_scale=1.0):
    for _ in range(count):
        history.append(
            rng.normal(scale=u_scale, size=history.dim_design),
            rng.normal(scale=x_scale, size=history.dim_param),
            rng.normal(),
            rng.normal(size=history.dim_design),
        )


class TestArchive:
    def test_starts_empty(self):
        h = SampleHistory(2, 3)
        assert len(h) == 0
        assert h.design_points.shape == (0, 2)
        assert h.param_samples.shape == (0, 3)

    def test_append_round_trips(self):
        h = SampleHistory(2, 1)
        h.append([1.0, 2.0], [3.0], 4.0, [5.0, 6.0])
        assert len(h) == 1
        assert_array_equal(h.design_points, [[1.0, 2.0]])
        assert_array_equal(h.param_samples, [[3.0]])
        assert_array_equal(h.objective_samples, [4.0])
        assert_array_equal(h.gradient_samples, [[5.0, 6.0]])

    def test_views_are_read_only(self):
        h = SampleHistory(1, 1)
        h.append([0.0], [0.0], 0.0, [0.0])
        with pytest.raises(ValueError):
            h.design_points[0] = 1.0

    def test_grows_past_initial_capacity(self):
        h = SampleHistory(1, 1, capacity=4)
        rng = np.random.default_rng(0)
        fill_history(h, rng, 40)
        assert len(h) == 40
        w = empirical_weights(h, [0.0])
        assert w.shape == (40,)

    @pytest.mark.parametrize("dim_design,dim_param", [(0, 1), (1, 0), (-1, 2)])
    def test_rejects_bad_dimensions(self, dim_design, dim_param):
        with pytest.raises(ValueError):
            SampleHistory(dim_design, dim_param)

    def test_append_validates(self):
        h = SampleHistory(2, 1)
        with pytest.raises(ValueError):
            h.append([1.0], [0.0], 0.0, [0.0, 0.0])
        with pytest.raises(ValueError):
            h.append([1.0, 1.0], [0.0, 0.0], 0.0, [0.0, 0.0])
        with pytest.raises(ValueError):
            h.append([1.0, 1.0], [0.0], np.nan, [0.0, 0.0])
        with pytest.raises(ValueError):
            h.append([1.0, np.inf], [0.0], 0.0, [0.0, 0.0])
        assert len(h) == 0


class TestEmpiricalWeights:
    def test_single_record_gets_all_weight(self):
        h = SampleHistory(1, 1)
        h.append([0.3], [0.1], 1.0, [2.0])
        assert_array_equal(empirical_weights(h, [-0.2]), [1.0])

    def test_symmetric_parameters_split_evenly(self):
        # Two records at the same design point: each parameter sample is
        # its own nearest record, so the votes split half and half.
        h = SampleHistory(1, 1)
        h.append([0.0], [-0.4], 0.0, [0.0])
        h.append([0.0], [0.4], 0.0, [0.0])
        assert_array_equal(empirical_weights(h, [0.0]), [0.5, 0.5])

    def test_design_distance_dominates_for_equal_parameters(self):
        # Equal parameter values make the vote depend on the design
        # distance alone, so the record nearest the query collects both.
        h = SampleHistory(1, 1)
        h.append([0.1], [0.3], 0.0, [0.0])
        h.append([0.9], [0.3], 1.0, [0.0])
        assert_array_equal(empirical_weights(h, [0.1]), [1.0, 0.0])
        assert_array_equal(empirical_weights(h, [0.9]), [0.0, 1.0])

    def test_exact_tie_resolves_to_lowest_index(self):
        h = SampleHistory(1, 1)
        h.append([0.2], [0.7], 0.0, [0.0])
        h.append([0.2], [0.7], 1.0, [1.0])
        h.append([0.2], [0.7], 2.0, [2.0])
        assert_array_equal(empirical_weights(h, [-1.0]), [1.0, 0.0, 0.0])

    def test_weights_form_convex_combination(self):
        rng = np.random.default_rng(42)
        h = SampleHistory(3, 2)
        fill_history(h, rng, 64)
        for _ in range(10):
            w = empirical_weights(h, rng.normal(size=3))
            assert np.all(w >= 0.0)
            assert np.sum(w) == pytest.approx(1.0, abs=1e-12)

    def test_empty_history_raises(self):
        h = SampleHistory(1, 1)
        with pytest.raises(ValueError):
            empirical_weights(h, [0.0])

    def test_query_dimension_checked(self):
        h = SampleHistory(2, 1)
        h.append([0.0, 0.0], [0.0], 0.0, [0.0, 0.0])
        with pytest.raises(ValueError):
            empirical_weights(h, [0.0])
        with pytest.raises(ValueError):
            empirical_weights(h, [np.nan, 0.0])

    def test_returned_array_is_caller_owned(self):
        h = SampleHistory(1, 1)
        h.append([0.0], [0.0], 0.0, [0.0])
        w = empirical_weights(h, [0.0])
        w[0] = -7.0
        assert_array_equal(empirical_weights(h, [0.0]), [1.0])


@pytest.mark.parametrize("dim_design", [1, 2, 3])
@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_scalar_parameter_votes_match_brute_force(dim_design, seed):
    """The sorted prefix-minimum kernel must reproduce the exhaustive vote,
    including its lowest-index tie rule, with queries interleaved between
    appends the way the optimizers issue them."""
    rng = np.random.default_rng(seed)
    h = SampleHistory(dim_design, 1, capacity=4)
    for k in range(120):
        if rng.uniform() < 0.3 and k > 4:
            # revisit an earlier parameter value to manufacture exact ties
            x = h.param_samples[rng.integers(0, len(h))].copy()
        else:
            x = rng.normal(size=1)
        u = rng.normal(size=dim_design)
        if rng.uniform() < 0.2 and k > 4:
            u = h.design_points[rng.integers(0, len(h))].copy()
        h.append(u, x, rng.normal(), rng.normal(size=dim_design))
        if k % 3 == 0:
            q = rng.normal(size=dim_design)
            assert_array_equal(empirical_weights(h, q), brute_force_weights(h, q))
    # also query at stored design points, where distances vanish exactly
    for idx in [0, 5, len(h) - 1]:
        q = h.design_points[idx].copy()
        assert_array_equal(empirical_weights(h, q), brute_force_weights(h, q))


@pytest.mark.parametrize("order", ["sorted", "reversed", "constant"])
def test_scalar_parameter_votes_on_degenerate_layouts(order):
    h = SampleHistory(1, 1)
    values = np.linspace(-1.0, 1.0, 12)
    if order == "reversed":
        values = values[::-1]
    elif order == "constant":
        values = np.zeros(12)
    rng = np.random.default_rng(9)
    for v in values:
        h.append(rng.normal(size=1), [v], rng.normal(), rng.normal(size=1))
        q = rng.normal(size=1)
        assert_array_equal(empirical_weights(h, q), brute_force_weights(h, q))


@pytest.mark.parametrize("dim_param", [2, 5])
def test_vector_parameter_votes_match_brute_force(dim_param):
    rng = np.random.default_rng(100 + dim_param)
    h = SampleHistory(2, dim_param, capacity=4)
    for k in range(80):
        h.append(
            rng.normal(size=2),
            rng.normal(size=dim_param),
            rng.normal(),
            rng.normal(size=2),
        )
        if k % 5 == 0:
            q = rng.normal(size=2)
            assert_array_equal(empirical_weights(h, q), brute_force_weights(h, q))


def test_weights_are_permutation_covariant():
    # Reordering the records permutes the weights the same way, provided
    # no exact ties make the index preference visible.
    rng = np.random.default_rng(23)
    records = [
        (rng.normal(size=2), rng.normal(size=1), rng.normal(), rng.normal(size=2))
        for _ in range(30)
    ]
    query = rng.normal(size=2)
    h = SampleHistory(2, 1)
    for rec in records:
        h.append(*rec)
    base = empirical_weights(h, query)
    perm = rng.permutation(30)
    h2 = SampleHistory(2, 1)
    for idx in perm:
        h2.append(*records[idx])
    assert_allclose(empirical_weights(h2, query), base[perm], rtol=0, atol=0)


class TestAggregate:
    def test_unit_weight_is_identity(self):
        h = SampleHistory(2, 1)
        h.append([0.0, 0.0], [0.0], 3.5, [1.0, -2.0])
        est = aggregate(h, [1.0])
        assert est.j_hat == 3.5
        assert_array_equal(est.g_hat, [1.0, -2.0])

    def test_even_split_averages(self):
        h = SampleHistory(1, 1)
        h.append([0.0], [0.0], 0.0, [1.0])
        h.append([1.0], [1.0], 2.0, [3.0])
        est = aggregate(h, [0.5, 0.5])
        assert est.j_hat == 1.0
        assert_array_equal(est.g_hat, [2.0])

    def test_matches_naive_summation(self):
        rng = np.random.default_rng(4)
        h = SampleHistory(3, 2)
        fill_history(h, rng, 25)
        w = rng.dirichlet(np.ones(25))
        est = aggregate(h, w)
        j_ref = sum(w[k] * h.objective_samples[k] for k in range(25))
        g_ref = sum(w[k] * h.gradient_samples[k] for k in range(25))
        assert est.j_hat == pytest.approx(j_ref, rel=1e-12)
        assert_allclose(est.g_hat, g_ref, rtol=1e-12)

    def test_rejects_wrong_length(self):
        h = SampleHistory(1, 1)
        h.append([0.0], [0.0], 0.0, [0.0])
        with pytest.raises(ValueError):
            aggregate(h, [0.5, 0.5])
        with pytest.raises(ValueError):
            aggregate(h, np.ones((1, 1)))


class TestEstimateAt:
    def test_single_record_returns_stored_sample(self):
        h = SampleHistory(2, 1)
        h.append([0.5, -0.5], [0.0], 7.25, [1.5, 2.5])
        est = estimate_at(h, [9.0, 9.0])
        assert est.j_hat == 7.25
        assert_array_equal(est.g_hat, [1.5, 2.5])

    def test_repeated_design_point_recovers_sample_mean(self):
        # When all records share the design point, the query there reduces
        # to each parameter voting for itself: the plain Monte Carlo mean.
        rng = np.random.default_rng(8)
        h = SampleHistory(1, 1)
        js, gs = [], []
        for _ in range(40):
            j, g = rng.normal(), rng.normal(size=1)
            js.append(j)
            gs.append(g[0])
            h.append([0.25], rng.normal(size=1), j, g)
        est = estimate_at(h, [0.25])
        assert est.j_hat == pytest.approx(np.mean(js), rel=1e-12)
        assert est.g_hat[0] == pytest.approx(np.mean(gs), rel=1e-12)

    def test_consistent_with_weights_and_aggregate(self):
        rng = np.random.default_rng(31)
        h = SampleHistory(2, 3)
        fill_history(h, rng, 50)
        q = rng.normal(size=2)
        direct = estimate_at(h, q)
        composed = aggregate(h, empirical_weights(h, q))
        assert direct.j_hat == composed.j_hat
        assert_array_equal(direct.g_hat, composed.g_hat)

    def test_empty_history_raises(self):
        with pytest.raises(ValueError):
            estimate_at(SampleHistory(1, 1), [0.0])

    def test_wrong_shape_raises(self):
        h = SampleHistory(2, 1)
        h.append([0.0, 0.0], [0.0], 0.0, [0.0, 0.0])
        with pytest.raises(ValueError):
            estimate_at(h, [0.0])
