"""Per-EV charging flexibility envelopes and their fleet aggregation.

A session's envelope is the band between its as-soon-as-possible and
as-late-as-possible cumulative energy trajectories. Power is held constant
within a step and the energy at step ``t`` includes the delivery of step
``t``. All power values are battery-side (already multiplied by ``eta``).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)


class SessionError(ValueError):
    """A charging session is invalid or does not fit the time grid."""

    def __init__(self, session_id: int, message: str):
        super().__init__(f"session {session_id}: {message}")
        self.session_id = session_id


@dataclass(frozen=True)
class TimeGrid:
    steps: int
    step_hours: float
    origin: str = "00:00"

    def __post_init__(self):
        if int(self.steps) != self.steps or self.steps < 2:
            raise ValueError(f"TimeGrid needs at least 2 integer steps, got {self.steps!r}")
        if not (self.step_hours > 0 and math.isfinite(self.step_hours)):
            raise ValueError(f"step_hours must be positive, got {self.step_hours!r}")
        object.__setattr__(self, "steps", int(self.steps))
        object.__setattr__(self, "step_hours", float(self.step_hours))

    @property
    def hours(self) -> np.ndarray:
        """Start hour of every step, relative to the origin."""
        return np.arange(self.steps) * self.step_hours

    def check_length(self, values, name: str = "series") -> np.ndarray:
        arr = np.asarray(values, dtype=float)
        if arr.shape != (self.steps,):
            raise ValueError(f"{name} has shape {arr.shape}, expected ({self.steps},)")
        return arr


@dataclass(frozen=True)
class ChargingSession:
    """One EV plug-in session on a discrete grid.

    ``t_start`` and ``duration`` are in steps; the EV is plugged during
    steps ``t_start .. t_start + duration - 1``.
    """

    id: int
    t_start: int
    duration: int
    e_req: float
    p_max: float
    eta: float = 1.0
    battery_cap: float = math.inf

    def __post_init__(self):
        if self.t_start < 0:
            raise SessionError(self.id, f"t_start={self.t_start} is negative")
        if self.duration < 1:
            raise SessionError(self.id, f"duration={self.duration} must be at least one step")
        if not self.e_req >= 0:
            raise SessionError(self.id, f"e_req={self.e_req} must be non-negative")
        if not self.p_max > 0:
            raise SessionError(self.id, f"p_max={self.p_max} must be positive")
        if not 0 < self.eta <= 1:
            raise SessionError(self.id, f"eta={self.eta} must lie in (0, 1]")
        if not self.battery_cap >= self.e_req:
            raise SessionError(self.id, f"e_req={self.e_req} exceeds battery_cap={self.battery_cap}")

    @property
    def t_end(self) -> int:
        """First step after departure."""
        return self.t_start + self.duration

    @property
    def rate(self) -> float:
        """Battery-side maximum charging power (kW)."""
        return self.p_max * self.eta

    def deliverable(self, grid: TimeGrid) -> float:
        return self.rate * self.duration * grid.step_hours

    def check_window(self, grid: TimeGrid) -> None:
        if self.t_start >= grid.steps or self.t_end > grid.steps:
            raise SessionError(
                self.id,
                f"window [{self.t_start}, {self.t_end}) exceeds grid of {grid.steps} steps",
            )


@dataclass(frozen=True)
class RepairEvent:
    session_id: int
    kind: str
    before: float
    after: float

    def as_dict(self) -> dict:
        return {"event": "repair", "kind": self.kind, "id": self.session_id,
                "before": self.before, "after": self.after}


def repair_session(session: ChargingSession, grid: TimeGrid) -> tuple[ChargingSession, RepairEvent | None]:
    """Clamp an undeliverable energy demand down to what the stay allows.

    The window itself is never repaired; a session that overruns the grid
    raises :class:`SessionError`.
    """
    session.check_window(grid)
    cap = session.deliverable(grid)
    if session.e_req <= cap:
        return session, None
    log.info("session %d: e_req %.6g kWh clamped to deliverable %.6g kWh", session.id, session.e_req, cap)
    event = RepairEvent(session.id, "e_req_clamped", session.e_req, cap)
    return replace(session, e_req=cap), event


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class FlexEnvelope:
    e_plus: np.ndarray
    e_minus: np.ndarray
    p_plus: np.ndarray
    p_minus: np.ndarray
    session_id: int | None = None

    def __len__(self):
        return len(self.e_plus)


@dataclass(frozen=True)
class AggregateEnvelope:
    E_plus: np.ndarray
    E_minus: np.ndarray
    P_plus: np.ndarray
    P_minus: np.ndarray
    count: int = 0

    def __len__(self):
        return len(self.E_plus)

    def __add__(self, other: "AggregateEnvelope") -> "AggregateEnvelope":
        if len(self) != len(other):
            raise ValueError(f"cannot add envelopes of length {len(self)} and {len(other)}")
        return AggregateEnvelope(
            _frozen(self.E_plus + other.E_plus),
            _frozen(self.E_minus + other.E_minus),
            _frozen(self.P_plus + other.P_plus),
            _frozen(self.P_minus + other.P_minus),
            self.count + other.count,
        )


def build_envelope(session: ChargingSession, grid: TimeGrid) -> FlexEnvelope:
    """Energy/power boundaries of a single session.

    Raises :class:`SessionError` when the window overruns the grid or the
    demand is not deliverable within the stay (use :func:`repair_session`
    first for untrusted input).
    """
    session.check_window(grid)
    cap = session.deliverable(grid)
    if session.e_req > cap * (1 + 1e-12):
        raise SessionError(session.id, f"e_req={session.e_req} exceeds deliverable {cap}")

    t = np.arange(grid.steps)
    step_energy = session.rate * grid.step_hours
    e = session.e_req
    inside = (t >= session.t_start) & (t < session.t_end)
    after = t >= session.t_end

    e_plus = np.minimum(e, step_energy * np.maximum(0, t - session.t_start + 1))
    e_minus = np.maximum(0.0, e - step_energy * (session.t_end - 1 - t))
    e_minus[t < session.t_start] = 0.0
    e_plus[after] = e
    e_minus[after] = e
    # the last in-window step must land on e_req exactly despite rounding
    e_plus[session.t_end - 1] = e
    e_minus[session.t_end - 1] = e

    p_plus = np.where(inside, session.rate, 0.0)
    return FlexEnvelope(_frozen(e_plus), _frozen(e_minus), _frozen(p_plus), _frozen(np.zeros(grid.steps)), session.id)


def aggregate_envelopes(envelopes: Sequence[FlexEnvelope], steps: int | None = None) -> AggregateEnvelope:
    """Elementwise sum of individual envelopes.

    ``steps`` sizes the all-zero result for an empty input; it is also
    checked against every member when given.
    """
    lengths = {len(env) for env in envelopes}
    if steps is not None:
        lengths.add(steps)
    if len(lengths) > 1:
        raise ValueError(f"envelopes have mismatched lengths {sorted(lengths)}")
    if not lengths:
        raise ValueError("cannot size an empty aggregation without steps")
    n = lengths.pop()
    acc = {k: np.zeros(n) for k in ("e_plus", "e_minus", "p_plus", "p_minus")}
    for env in envelopes:
        for k in acc:
            acc[k] += getattr(env, k)
    return AggregateEnvelope(
        _frozen(acc["e_plus"]), _frozen(acc["e_minus"]),
        _frozen(acc["p_plus"]), _frozen(acc["p_minus"]), len(envelopes),
    )


def aggregate_sessions(sessions: Sequence[ChargingSession], grid: TimeGrid) -> AggregateEnvelope:
    return aggregate_envelopes([build_envelope(s, grid) for s in sessions], steps=grid.steps)


@dataclass(frozen=True)
class Violation:
    step: int
    kind: str  # power_lower | power_upper | energy_lower | energy_upper
    bound: float
    value: float

    @property
    def magnitude(self) -> float:
        return abs(self.value - self.bound)


@dataclass(frozen=True)
class FeasibilityReport:
    feasible: bool
    violations: list[Violation] = field(default_factory=list)

    def __bool__(self):
        return self.feasible


def check_feasible(P, agg: AggregateEnvelope, grid: TimeGrid, tol: float = 1e-9) -> FeasibilityReport:
    """Check an aggregate power profile against power and energy bounds."""
    P = grid.check_length(P, "power profile")
    if len(agg) != grid.steps:
        raise ValueError(f"envelope has {len(agg)} steps, grid has {grid.steps}")
    energy = np.cumsum(P) * grid.step_hours
    checks = (
        ("power_lower", P < agg.P_minus - tol, agg.P_minus, P),
        ("power_upper", P > agg.P_plus + tol, agg.P_plus, P),
        ("energy_lower", energy < agg.E_minus - tol, agg.E_minus, energy),
        ("energy_upper", energy > agg.E_plus + tol, agg.E_plus, energy),
    )
    violations = [
        Violation(int(t), kind, float(bound[t]), float(value[t]))
        for kind, mask, bound, value in checks
        for t in np.flatnonzero(mask)
    ]
    violations.sort(key=lambda v: (v.step, v.kind))
    return FeasibilityReport(not violations, violations)
