import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from evgrid.flex_model import (
    ChargingSession,
    SessionError,
    TimeGrid,
    aggregate_envelopes,
    aggregate_sessions,
    build_envelope,
    check_feasible,
    repair_session,
)

HOURLY4 = TimeGrid(4, 1.0)


def example_session(**kw):
    base = dict(id=0, t_start=0, duration=4, e_req=4.0, p_max=2.0, eta=1.0)
    base.update(kw)
    return ChargingSession(**base)


@st.composite
def sessions(draw, steps=12):
    t_start = draw(st.integers(0, steps - 1))
    duration = draw(st.integers(1, steps - t_start))
    p_max = draw(st.floats(0.5, 20.0))
    eta = draw(st.floats(0.5, 1.0))
    dt = 0.25
    frac = draw(st.floats(0.0, 1.0))
    e_req = frac * p_max * eta * duration * dt
    return ChargingSession(id=draw(st.integers(0, 10**6)), t_start=t_start, duration=duration,
                           e_req=e_req, p_max=p_max, eta=eta)


class TestTimeGrid:
    def test_hours(self):
        assert_allclose(TimeGrid(4, 0.5).hours, [0.0, 0.5, 1.0, 1.5])

    @pytest.mark.parametrize("steps, dt", [(1, 1.0), (0, 1.0), (4, 0.0), (4, -1.0), (4, math.inf)])
    def test_rejects_bad_grid(self, steps, dt):
        with pytest.raises(ValueError):
            TimeGrid(steps, dt)

    def test_check_length(self):
        with pytest.raises(ValueError, match="price"):
            HOURLY4.check_length([1, 2, 3], "price")


class TestChargingSession:
    def test_rate_includes_efficiency(self):
        s = example_session(eta=0.9)
        assert s.rate == pytest.approx(1.8)
        assert s.deliverable(HOURLY4) == pytest.approx(7.2)

    @pytest.mark.parametrize("field, value", [
        ("t_start", -1), ("duration", 0), ("e_req", -0.1), ("p_max", 0.0), ("eta", 0.0), ("eta", 1.5),
    ])
    def test_invalid_fields_name_the_session(self, field, value):
        with pytest.raises(SessionError, match="session 0") as info:
            example_session(**{field: value})
        assert info.value.session_id == 0

    def test_battery_smaller_than_demand(self):
        with pytest.raises(SessionError):
            example_session(battery_cap=3.0)

    def test_window_overrun(self):
        s = example_session(id=7, t_start=2, duration=3)
        with pytest.raises(SessionError, match="session 7"):
            s.check_window(HOURLY4)
        with pytest.raises(SessionError, match="session 7"):
            build_envelope(s, HOURLY4)


class TestRepair:
    def test_clamps_undeliverable_demand(self):
        s = example_session(e_req=10.0)
        fixed, event = repair_session(s, HOURLY4)
        assert fixed.e_req == pytest.approx(8.0)
        assert event.as_dict() == {"event": "repair", "kind": "e_req_clamped", "id": 0,
                                   "before": 10.0, "after": 8.0}

    def test_deliverable_demand_untouched(self):
        s = example_session()
        fixed, event = repair_session(s, HOURLY4)
        assert fixed is s and event is None

    def test_build_rejects_unrepaired_demand(self):
        with pytest.raises(SessionError, match="deliverable"):
            build_envelope(example_session(e_req=9.0), HOURLY4)


class TestBuildEnvelope:
    def test_hand_enumerated_example(self):
        env = build_envelope(example_session(), HOURLY4)
        assert_allclose(env.e_plus, [2, 4, 4, 4])
        assert_allclose(env.e_minus, [0, 0, 2, 4])
        assert_allclose(env.p_plus, [2, 2, 2, 2])
        assert_allclose(env.p_minus, 0.0)

    def test_zero_laxity_collapses(self):
        env = build_envelope(example_session(e_req=8.0), HOURLY4)
        assert_allclose(env.e_plus, env.e_minus)

    def test_zero_demand(self):
        env = build_envelope(example_session(e_req=0.0), HOURLY4)
        assert_array_equal(env.e_plus, 0.0)
        assert_array_equal(env.e_minus, 0.0)

    def test_window_inside_grid(self):
        grid = TimeGrid(6, 0.5)
        s = ChargingSession(id=3, t_start=1, duration=3, e_req=2.0, p_max=2.0)
        env = build_envelope(s, grid)
        assert_allclose(env.p_plus, [0, 2, 2, 2, 0, 0])
        assert_allclose(env.e_plus, [0, 1, 2, 2, 2, 2])
        assert_allclose(env.e_minus, [0, 0, 1, 2, 2, 2])

    def test_arrays_are_read_only(self):
        env = build_envelope(example_session(), HOURLY4)
        with pytest.raises(ValueError):
            env.e_plus[0] = 1.0

    @given(sessions())
    def test_monotone_and_ordered(self, s):
        env = build_envelope(s, TimeGrid(12, 0.25))
        assert np.all(np.diff(env.e_plus) >= -1e-12)
        assert np.all(np.diff(env.e_minus) >= -1e-12)
        assert np.all(env.e_minus <= env.e_plus + 1e-12)
        assert env.e_plus[s.t_end - 1] == s.e_req == env.e_minus[s.t_end - 1]
        assert env.e_plus[-1] == s.e_req == env.e_minus[-1]

    @given(sessions(), st.floats(0.0, 1.0))
    def test_feasible_single_profile_is_realizable(self, s, mix):
        grid = TimeGrid(12, 0.25)
        env = build_envelope(s, grid)
        # blend of the two extreme trajectories is feasible
        cum = mix * env.e_plus + (1 - mix) * env.e_minus
        P = np.diff(cum, prepend=0.0) / grid.step_hours
        agg = aggregate_envelopes([env])
        assert check_feasible(P, agg, grid, tol=1e-9)
        assert np.all(P >= -1e-9) and np.all(P <= env.p_plus + 1e-9)


class TestAggregate:
    def test_two_session_example(self):
        second = ChargingSession(id=1, t_start=2, duration=2, e_req=2.0, p_max=2.0)
        agg = aggregate_sessions([example_session(), second], HOURLY4)
        assert_allclose(agg.E_plus, [2, 4, 6, 6])
        assert agg.count == 2

    def test_single_is_identity(self):
        env = build_envelope(example_session(), HOURLY4)
        agg = aggregate_envelopes([env])
        assert_array_equal(agg.E_plus, env.e_plus)
        assert_array_equal(agg.E_minus, env.e_minus)
        assert_array_equal(agg.P_plus, env.p_plus)

    def test_two_identical_double(self):
        env = build_envelope(example_session(), HOURLY4)
        agg = aggregate_envelopes([env, env])
        assert_array_equal(agg.E_plus, 2 * env.e_plus)
        assert_array_equal(agg.E_minus, 2 * env.e_minus)

    def test_empty_is_zero(self):
        agg = aggregate_envelopes([], steps=5)
        assert_array_equal(agg.E_plus, np.zeros(5))
        assert agg.count == 0
        with pytest.raises(ValueError):
            aggregate_envelopes([])

    def test_mismatched_lengths(self):
        a = build_envelope(example_session(), HOURLY4)
        b = build_envelope(example_session(), TimeGrid(5, 1.0))
        with pytest.raises(ValueError, match="mismatched"):
            aggregate_envelopes([a, b])

    @given(st.lists(sessions(), min_size=1, max_size=6), st.integers(0, 6))
    def test_linearity(self, ss, cut):
        grid = TimeGrid(12, 0.25)
        whole = aggregate_sessions(ss, grid)
        parts = aggregate_sessions(ss[:cut], grid) + aggregate_sessions(ss[cut:], grid)
        assert_allclose(whole.E_plus, parts.E_plus, atol=1e-9)
        assert_allclose(whole.E_minus, parts.E_minus, atol=1e-9)
        assert_allclose(whole.P_plus, parts.P_plus, atol=1e-9)
        assert whole.count == parts.count


class TestCheckFeasible:
    def setup_method(self):
        self.agg = aggregate_sessions([example_session()], HOURLY4)

    def test_zero_profile_with_no_demand(self):
        agg = aggregate_sessions([example_session(e_req=0.0)], HOURLY4)
        assert check_feasible(np.zeros(4), agg, HOURLY4)

    def test_full_power_overshoots_upper_energy(self):
        report = check_feasible([2, 2, 2, 2], self.agg, HOURLY4)
        assert not report
        first = report.violations[0]
        assert (first.step, first.kind) == (2, "energy_upper")
        assert first.magnitude == pytest.approx(2.0)

    def test_latest_trajectory_is_feasible(self):
        P = np.array([0, 0, 2, 2], dtype=float)
        assert check_feasible(P, self.agg, HOURLY4)
        assert_allclose(np.cumsum(P), self.agg.E_minus)

    def test_power_bounds(self):
        report = check_feasible([-1, 3, 2, 0], self.agg, HOURLY4)
        kinds = {(v.step, v.kind) for v in report.violations}
        assert (0, "power_lower") in kinds and (1, "power_upper") in kinds

    def test_tolerance(self):
        P = np.array([0, 0, 2, 2]) - 1e-10
        assert not check_feasible(P, self.agg, HOURLY4, tol=0.0)
        assert check_feasible(P, self.agg, HOURLY4, tol=1e-9)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            check_feasible([1, 2], self.agg, HOURLY4)
