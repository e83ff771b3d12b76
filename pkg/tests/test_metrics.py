import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from evgrid.flex_model import TimeGrid
from evgrid.metrics import (
    MetricsReport,
    build_report,
    format_table,
    ramp_index,
    ramp_reduction,
    table_rows,
    total_cost,
    tracking_rmse,
)

finite = st.floats(-1e4, 1e4, allow_nan=False)
series = st.lists(finite, min_size=2, max_size=30)


class TestRampIndex:
    def test_hand_example(self):
        assert ramp_index([0.0, 10.0, 5.0]) == 10.0

    def test_constant_is_zero(self):
        assert ramp_index(np.full(7, 3.3)) == 0.0

    def test_linear_ramp_gives_slope(self):
        assert ramp_index(2.5 * np.arange(10)) == pytest.approx(2.5)

    def test_needs_two_points(self):
        with pytest.raises(ValueError):
            ramp_index([1.0])

    def test_rejects_matrix(self):
        with pytest.raises(ValueError):
            ramp_index(np.ones((2, 2)))

    @given(series, finite)
    def test_shift_invariant(self, xs, c):
        x = np.array(xs)
        assert ramp_index(x + c) == pytest.approx(ramp_index(x), abs=1e-6)

    @given(series, st.floats(0, 100))
    def test_positively_homogeneous(self, xs, a):
        x = np.array(xs)
        assert ramp_index(a * x) == pytest.approx(a * ramp_index(x), rel=1e-9, abs=1e-9)

    @given(series)
    def test_reversal_invariant(self, xs):
        x = np.array(xs)
        assert ramp_index(x[::-1]) == ramp_index(x)


class TestRampReduction:
    @pytest.mark.parametrize("u, c, expected", [(1800.0, 786.2, 56.3), (1768.3, 941.4, 46.8)])
    def test_published_pairs(self, u, c, expected):
        assert ramp_reduction(u, c) == expected

    def test_no_change(self):
        assert ramp_reduction(50.0, 50.0) == 0.0

    def test_negative_when_worse(self):
        assert ramp_reduction(10.0, 12.0) == -20.0

    @pytest.mark.parametrize("u", [0.0, -1.0, math.nan])
    def test_rejects_nonpositive_baseline(self, u):
        with pytest.raises(ValueError):
            ramp_reduction(u, 1.0)


class TestCost:
    def test_hand_example(self):
        assert total_cost([10.0, 20.0], [0.1, 0.2], 0.5) == pytest.approx(2.5)

    def test_zero_price(self):
        assert total_cost([5.0, 7.0], [0.0, 0.0], 1.0) == 0.0

    def test_unit_load_over_a_day(self):
        assert total_cost(np.ones(24), np.ones(24), 1.0) == pytest.approx(24.0)

    def test_moving_load_to_cheaper_step_lowers_cost(self):
        price = np.array([0.3, 0.1, 0.2])
        assert total_cost([0.0, 5.0, 0.0], price, 1.0) < total_cost([5.0, 0.0, 0.0], price, 1.0)

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="price"):
            total_cost([1.0, 2.0], [1.0], 1.0)

    @given(series, series, st.floats(-5, 5))
    def test_linear_in_load(self, a, b, w):
        n = min(len(a), len(b))
        a, b = np.array(a[:n]), np.array(b[:n])
        price = np.linspace(0.01, 0.1, n)
        lhs = total_cost(a + w * b, price, 0.25)
        rhs = total_cost(a, price, 0.25) + w * total_cost(b, price, 0.25)
        assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-6)

    @given(st.lists(st.floats(0, 1), min_size=2, max_size=30), st.floats(0, 10))
    def test_linear_in_price(self, prices, w):
        lam = np.array(prices)
        load = np.linspace(100.0, 200.0, lam.size)
        assert total_cost(load, w * lam, 0.5) == pytest.approx(w * total_cost(load, lam, 0.5), rel=1e-12, abs=1e-9)


class TestTrackingRmse:
    def test_hand_example(self):
        assert tracking_rmse([0.0, 0.0], [3.0, 4.0]) == pytest.approx(math.sqrt(12.5))

    def test_identical_is_zero(self):
        assert tracking_rmse([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 0.0

    def test_constant_offset(self):
        assert tracking_rmse(np.arange(5.0), np.arange(5.0) - 1.5) == pytest.approx(1.5)

    def test_empty_is_zero(self):
        assert tracking_rmse([], []) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            tracking_rmse([1.0], [1.0, 2.0])

    @given(series, series)
    def test_symmetric(self, a, b):
        n = min(len(a), len(b))
        assert tracking_rmse(a[:n], b[:n]) == tracking_rmse(b[:n], a[:n])


def example_report(**kw):
    grid = TimeGrid(4, 1.0)
    args = dict(baseload=[10.0, 10.0, 10.0, 10.0], solar=[0.0, 2.0, 2.0, 0.0],
                ev_load=[0.0, 4.0, 4.0, 0.0], uncontrolled_ev=[8.0, 0.0, 0.0, 0.0],
                p_hat=[0.0, 4.0, 3.0, 0.0], price=[0.3, 0.1, 0.1, 0.3], dt=grid.step_hours,
                shortfalls=[0.0, 0.5], label="demo")
    args.update(kw)
    return build_report(**args)


class TestReport:
    def test_values(self):
        r = example_report()
        # controlled 10, 12, 12, 10; uncontrolled 18, 8, 8, 10
        assert r.total_cost_usd == pytest.approx(0.3 * 10 + 0.1 * 12 * 2 + 0.3 * 10)
        assert r.total_cost_uncontrolled_usd == pytest.approx(0.3 * 18 + 0.1 * 8 * 2 + 0.3 * 10)
        assert r.ramp_index_controlled == 2.0
        assert r.ramp_index_uncontrolled == 10.0
        assert r.ramp_reduction_pct == 80.0
        # tracking only over the steps with a positive plan
        assert r.tracking_rmse == pytest.approx(math.sqrt(0.5))
        assert r.tracking_rmse_rel == pytest.approx(math.sqrt(0.5) / 3.5)
        assert (r.peak_step, r.peak_load) == (1, 12.0)
        assert (r.ev_count, r.shortfall_count, r.shortfall_kwh) == (2, 1, 0.5)

    def test_round_trip(self):
        r = example_report()
        assert MetricsReport.from_dict(r.as_dict()) == r

    def test_flat_uncontrolled_gives_nan_reduction(self):
        r = example_report(uncontrolled_ev=[0.0, 2.0, 2.0, 0.0], solar=[0.0, 0.0, 0.0, 0.0],
                           baseload=[5.0, 3.0, 3.0, 5.0])
        assert math.isnan(r.ramp_reduction_pct)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            example_report(price=[0.1, 0.2])

    def test_table(self):
        a, b = example_report(), example_report(label="")
        rows = table_rows([a, b])
        assert rows[0] == ["Metric", "demo", "2"]
        assert all(len(row) == 3 for row in rows)
        text = format_table([a, b])
        assert "Max. ramp reduction (%)" in text and "80.0" in text
        assert_allclose(float(rows[2][1]), 10.0)
