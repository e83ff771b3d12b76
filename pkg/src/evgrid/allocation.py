"""Real-time decentralized allocation with receding-horizon control.

Each step the aggregator broadcasts a consensus signal

    c(t) = (sum_n p_n(t) - target(t)) / (beta * N)

and every EV answers with the proximal best response

    min_p  sum_t c(t) p(t) + sum_t (p(t) - prev(t))^2
    s.t.   0 <= p(t) <= p_max * eta inside its estimated window,
           R <= sum_t p(t) dt <= R_max.

Best responses are computed synchronously against the same signal, so the
outcome does not depend on EV processing order. Only the first step of each
equilibrium schedule is implemented.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .day_ahead import DayAheadSchedule
from .flex_model import ChargingSession, TimeGrid
from .scenario import Scenario

log = logging.getLogger(__name__)

PENDING, ACTIVE, DEPARTED = "pending", "active", "departed"
_BIG = 1e300


class NoParticipantsError(ValueError):
    """Consensus was requested with no participating EVs."""


@dataclass
class EVState:
    session: ChargingSession
    realized_d: int
    realized_e: float
    d_hat: int
    e_hat: float
    delivered: float = 0.0
    schedule: np.ndarray | None = None
    status: str = PENDING

    @classmethod
    def from_session(cls, session: ChargingSession, realized: tuple[int, float] | None = None) -> "EVState":
        d, e = realized if realized is not None else (session.duration, session.e_req)
        return cls(session, int(d), float(e), session.duration, session.e_req)

    @property
    def id(self) -> int:
        return self.session.id

    def present(self, now: int) -> bool:
        s = self.session.t_start
        return s <= now < s + self.realized_d

    def window_end(self, grid: TimeGrid) -> int:
        return min(self.session.t_start + self.d_hat, grid.steps)

    @property
    def required(self) -> float:
        return max(0.0, self.e_hat - self.delivered)

    @property
    def headroom(self) -> float:
        return max(0.0, self.session.battery_cap - self.delivered)


@dataclass
class ControlSignal:
    values: np.ndarray
    iteration: int = 0

    def __len__(self):
        return len(self.values)


@dataclass
class ConsensusOptions:
    beta: float = 2.0
    err_tol: float = 1e-4
    k_max: int = 200
    N: int | None = None  # participant count; defaults to the number of schedules
    init: str = "asap"    # asap | proportional | random
    seed: int = 0

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if not self.err_tol > 0:
            raise ValueError("err_tol must be positive")
        if self.k_max < 1:
            raise ValueError("k_max must be at least 1")
        if self.init not in ("asap", "proportional", "random"):
            raise ValueError(f"unknown init mode {self.init!r}")


@dataclass
class ConsensusResult:
    schedules: np.ndarray
    signal: ControlSignal
    iterations: int
    converged: bool
    residual: float


def control_signal(schedules, target, opts: ConsensusOptions, iteration: int = 0) -> ControlSignal:
    schedules = np.atleast_2d(np.asarray(schedules, dtype=float))
    target = np.asarray(target, dtype=float)
    n = opts.N if opts.N is not None else (schedules.shape[0] if schedules.size else 0)
    if n <= 0:
        raise NoParticipantsError("no participating EVs; skip consensus")
    if schedules.size and schedules.shape[1] != len(target):
        raise ValueError(f"schedules span {schedules.shape[1]} steps, target {len(target)}")
    total = schedules.sum(axis=0) if schedules.size else np.zeros_like(target)
    return ControlSignal((total - target) / (opts.beta * n), iteration)


def _solve_multiplier(a: np.ndarray, ub: np.ndarray, target: np.ndarray, dt: float) -> np.ndarray:
    """Rows of ``clip(a + mu*dt/2, 0, ub)`` whose energy equals ``target``.

    The energy is a nondecreasing piecewise-linear function of ``mu``; its
    breakpoints are sorted and the crossing segment located by a monotone
    search, then interpolated exactly.
    """
    half = 0.5 * dt
    live = ub > 0
    lo_bp = np.where(live, -a / half, _BIG)
    hi_bp = np.where(live, (ub - a) / half, _BIG)
    bp = np.concatenate([lo_bp, hi_bp], axis=1)
    ds = np.where(live, half * dt, 0.0)
    dslope = np.concatenate([ds, -ds], axis=1)
    order = np.argsort(bp, axis=1, kind="stable")
    bp = np.take_along_axis(bp, order, axis=1)
    slope = np.cumsum(np.take_along_axis(dslope, order, axis=1), axis=1)
    gaps = np.diff(bp, axis=1)
    gaps[bp[:, 1:] >= _BIG] = 0.0
    energy = np.zeros_like(bp)
    energy[:, 1:] = np.cumsum(slope[:, :-1] * gaps, axis=1)

    target = np.minimum(target, ub.sum(axis=1) * dt)
    k = np.maximum((energy < target[:, None]).sum(axis=1), 1)
    rows = np.arange(len(k))
    e0, b0, s0 = energy[rows, k - 1], bp[rows, k - 1], slope[rows, k - 1]
    mu = b0 + np.where(s0 > 0, (target - e0) / np.where(s0 > 0, s0, 1.0), 0.0)
    p = np.clip(a + mu[:, None] * half, 0.0, ub)

    # absorb rounding into the free entries so the energy bound holds to ulp level
    err = target - p.sum(axis=1) * dt
    free = (p > 0) & (p < ub)
    nfree = free.sum(axis=1)
    fix = (nfree > 0) & (err != 0)
    if fix.any():
        shift = np.where(fix, err / (np.maximum(nfree, 1) * dt), 0.0)
        p = np.where(free, np.clip(p + shift[:, None], 0.0, ub), p)
    return p


def best_response_batch(signal, prev: np.ndarray, ub: np.ndarray, lower: np.ndarray,
                        upper: np.ndarray, dt: float) -> np.ndarray:
    """Vectorized best response for many EVs against one signal.

    ``prev`` and ``ub`` are (EVs x steps); ``ub`` is zero outside each EV's
    window. ``lower``/``upper`` bound each row's energy in kWh. A row whose
    ``lower`` exceeds its capacity gets full power throughout its window.
    """
    c = np.asarray(signal, dtype=float)
    a = prev - 0.5 * c
    p = np.clip(a, 0.0, ub)
    energy = p.sum(axis=1) * dt
    below = energy < lower
    above = energy > upper
    need = below | above
    if need.any():
        idx = np.flatnonzero(need)
        target = np.where(below[idx], lower[idx], upper[idx])
        p[idx] = _solve_multiplier(a[idx], ub[idx], target, dt)
    return p


def asap_schedules(ub: np.ndarray, lower: np.ndarray, dt: float) -> np.ndarray:
    """Charge at full power from the window start until ``lower`` is met."""
    before = (np.cumsum(ub, axis=1) - ub) * dt
    return np.clip((lower[:, None] - before) / dt, 0.0, ub)


def _ev_arrays(evs: Sequence[EVState], grid: TimeGrid, now: int):
    horizon = grid.steps - now
    ub = np.zeros((len(evs), horizon))
    lower = np.empty(len(evs))
    upper = np.empty(len(evs))
    for i, ev in enumerate(evs):
        start = max(ev.session.t_start, now) - now
        end = ev.window_end(grid) - now
        ub[i, start:end] = ev.session.rate
        lower[i] = ev.required
        upper[i] = ev.headroom
    return ub, lower, upper


def ev_best_response(c, prev, ev: EVState, grid: TimeGrid) -> np.ndarray:
    """Best response of one EV over the remaining horizon ``[T - len(c), T)``."""
    values = c.values if isinstance(c, ControlSignal) else np.asarray(c, dtype=float)
    now = grid.steps - len(values)
    ub, lower, upper = _ev_arrays([ev], grid, now)
    prev = np.asarray(prev, dtype=float).reshape(1, -1)
    return best_response_batch(values, prev, ub, lower, upper, grid.step_hours)[0]


def initial_schedules(ub, lower, upper, dt: float, opts: ConsensusOptions, salt: int = 0,
                      target: np.ndarray | None = None) -> np.ndarray:
    if opts.init == "asap":
        return asap_schedules(ub, lower, dt)
    if opts.init == "proportional":
        cap = ub.sum(axis=0)
        share = np.divide(np.clip(target, 0.0, None), cap, out=np.zeros_like(cap), where=cap > 0)
        return best_response_batch(np.zeros(ub.shape[1]), ub * share, ub, lower, upper, dt)
    rng = np.random.default_rng([opts.seed, salt])
    raw = rng.uniform(0.0, 1.0, ub.shape) * ub
    return best_response_batch(np.zeros(ub.shape[1]), raw, ub, lower, upper, dt)


def consensus_arrays(ub: np.ndarray, lower: np.ndarray, upper: np.ndarray, target: np.ndarray,
                     dt: float, opts: ConsensusOptions, init: np.ndarray | None = None,
                     salt: int = 0) -> ConsensusResult:
    """Synchronous consensus iterations on array-form EV constraints."""
    p = init.copy() if init is not None else initial_schedules(ub, lower, upper, dt, opts, salt, target)
    signal = control_signal(p, target, opts, 0)
    residual = np.inf
    k = 0
    while k < opts.k_max:
        p = best_response_batch(signal.values, p, ub, lower, upper, dt)
        k += 1
        new = control_signal(p, target, opts, k)
        residual = float(np.max(np.abs(new.values - signal.values), initial=0.0))
        signal = new
        if residual <= opts.err_tol:
            break
    return ConsensusResult(p, signal, k, residual <= opts.err_tol, residual)


def run_consensus(evs: Sequence[EVState], target, opts: ConsensusOptions, grid: TimeGrid,
                  init: np.ndarray | None = None) -> ConsensusResult:
    """Run consensus for ``evs`` over the horizon implied by ``len(target)``.

    Rows of the returned schedules follow the order of ``evs``.
    """
    target = np.asarray(target, dtype=float)
    if not evs:
        raise NoParticipantsError("no active EVs; skip consensus")
    now = grid.steps - len(target)
    ub, lower, upper = _ev_arrays(evs, grid, now)
    return consensus_arrays(ub, lower, upper, target, grid.step_hours, opts, init, salt=now)


# -- day-ahead disaggregation -------------------------------------------------

@dataclass(frozen=True)
class PlanOptions:
    max_iters: int = 3000
    tol_kw: float = 1e-3  # aggregate change over a check window that counts as settled
    check_every: int = 25

    def __post_init__(self):
        if self.max_iters < 1 or self.check_every < 1:
            raise ValueError("max_iters and check_every must be at least 1")
        if not self.tol_kw > 0:
            raise ValueError("tol_kw must be positive")


@dataclass
class PlanResult:
    schedules: np.ndarray
    iterations: int
    converged: bool
    rmse: float


def disaggregate(sessions: Sequence[ChargingSession], target, grid: TimeGrid,
                 opts: PlanOptions | None = None) -> PlanResult:
    """Split an aggregate schedule into per-EV reference schedules.

    Minimizes ``||sum_n p_n - target||^2`` over the declared sessions with
    accelerated projected gradient (step ``1/N``, monotone restart); each
    projection is an exact per-EV best response to a zero signal. Rows
    follow the order of ``sessions``.
    """
    opts = opts or PlanOptions()
    target = grid.check_length(target, "target")
    dt = grid.step_hours
    n = len(sessions)
    if n == 0:
        return PlanResult(np.zeros((0, grid.steps)), 0, True, float(np.sqrt(np.mean(target ** 2))))
    evs = [EVState.from_session(s) for s in sessions]
    ub, lower, upper = _ev_arrays(evs, grid, 0)
    zero = np.zeros(grid.steps)

    def proj(y):
        return best_response_batch(zero, y, ub, lower, upper, dt)

    def value(p):
        return float(np.sum((p.sum(axis=0) - target) ** 2))

    cap = ub.sum(axis=0)
    share = np.divide(np.clip(target, 0.0, None), cap, out=np.zeros_like(cap), where=cap > 0)
    x = proj(ub * share)
    y, t, fx = x.copy(), 1.0, value(x)
    mark = x.sum(axis=0)
    converged = False
    k = 0
    while k < opts.max_iters:
        k += 1
        xn = proj(y - (y.sum(axis=0) - target) / n)
        fn = value(xn)
        if fn > fx:
            # restart momentum from the last accepted point
            t = 1.0
            xn = proj(x - (x.sum(axis=0) - target) / n)
            fn = value(xn)
        tn = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = xn + ((t - 1.0) / tn) * (xn - x)
        x, fx, t = xn, fn, tn
        if k % opts.check_every == 0:
            agg = x.sum(axis=0)
            if np.max(np.abs(agg - mark)) <= opts.tol_kw:
                converged = True
                break
            mark = agg
    return PlanResult(x, k, converged, float(np.sqrt(fx / grid.steps)))


# -- estimators ----------------------------------------------------------------

@dataclass(frozen=True)
class Estimate:
    d_hat: int
    e_hat: float
    repaired: bool = False


EstimatorPolicy = Callable[[EVState, int, TimeGrid], Estimate]


def oracle_estimator(ev: EVState, now: int, grid: TimeGrid) -> Estimate:
    return Estimate(ev.realized_d, ev.realized_e)


def declared_persistence_estimator(ev: EVState, now: int, grid: TimeGrid) -> Estimate:
    """Trust the declaration, extending the stay one step at a time when overrun."""
    s = ev.session
    elapsed = now - s.t_start
    d_hat = ev.d_hat
    if elapsed >= d_hat:
        d_hat = elapsed + 1
    d_hat = min(d_hat, grid.steps - s.t_start)
    remaining = s.t_start + d_hat - now
    cap = min(ev.delivered + s.rate * grid.step_hours * remaining, s.battery_cap)
    e_hat = s.e_req
    if e_hat > cap:
        return Estimate(d_hat, cap, True)
    return Estimate(d_hat, e_hat)


ESTIMATORS: dict[str, EstimatorPolicy] = {
    "oracle": oracle_estimator,
    "declared-persistence": declared_persistence_estimator,
}


def update_estimates(ev: EVState, now: int, estimator: EstimatorPolicy | str, grid: TimeGrid,
                     events: list | None = None) -> tuple[int, float]:
    policy = ESTIMATORS[estimator] if isinstance(estimator, str) else estimator
    est = policy(ev, now, grid)
    if est.repaired:
        log.debug("EV %d: e_hat clamped to %.6g kWh at step %d", ev.id, est.e_hat, now)
        if events is not None:
            events.append({"event": "repair", "kind": "e_hat_clamped", "id": ev.id,
                           "step": now, "before": ev.session.e_req, "after": est.e_hat})
    return est.d_hat, est.e_hat


# -- receding-horizon simulation -----------------------------------------------

@dataclass
class SimulationOptions:
    consensus: ConsensusOptions = field(default_factory=ConsensusOptions)
    estimator: str = "declared-persistence"
    perfect_forecast: bool = True
    # hold each not-yet-arrived planned EV to its share of the day-ahead plan
    reserve_pending: bool = True
    # seed each step from the previous equilibrium (or the plan on arrival)
    warm_start: bool = True
    plan: PlanOptions = field(default_factory=PlanOptions)


@dataclass
class EVRecord:
    id: int
    arrive: int
    depart: int
    delivered: float
    required: float
    deliverable: float
    planned: bool = True

    @property
    def shortfall_kwh(self) -> float:
        return max(0.0, min(self.required, self.deliverable) - self.delivered)

    @property
    def shortfall(self) -> bool:
        return self.shortfall_kwh > 1e-6


@dataclass
class SimulationTrace:
    grid: TimeGrid
    baseload: np.ndarray
    solar: np.ndarray
    ev_load: np.ndarray
    target: np.ndarray
    p_hat: np.ndarray
    uncontrolled_ev: np.ndarray
    iterations: np.ndarray
    residual: np.ndarray
    converged: np.ndarray
    participants: np.ndarray
    ev_records: list[EVRecord]
    events: list[dict]
    plan_iterations: int = 0

    @property
    def total_load(self) -> np.ndarray:
        return self.baseload - self.solar + self.ev_load

    @property
    def uncontrolled_load(self) -> np.ndarray:
        return self.baseload - self.solar + self.uncontrolled_ev

    @property
    def consensus_steps(self) -> np.ndarray:
        return self.iterations > 0

    @property
    def convergence_rate(self) -> float:
        ran = self.consensus_steps
        return float(self.converged[ran].mean()) if ran.any() else 1.0


def uncontrolled_profile(scenario: Scenario) -> np.ndarray:
    """Fleet load when every EV charges at full power on arrival (realized sessions)."""
    grid = scenario.grid
    dt = grid.step_hours
    load = np.zeros(grid.steps)
    for s in scenario.sessions:
        d, e = scenario.realized[s.id]
        left = e
        for t in range(s.t_start, s.t_start + d):
            if left <= 0:
                break
            p = min(s.rate, left / dt)
            load[t] += p
            left -= p * dt
    return load


def simulate(scenario: Scenario, dayahead: DayAheadSchedule | np.ndarray,
             opts: SimulationOptions | None = None) -> SimulationTrace:
    opts = opts or SimulationOptions()
    grid = scenario.grid
    T, dt = grid.steps, grid.step_hours
    p_hat = np.asarray(dayahead.p_hat if isinstance(dayahead, DayAheadSchedule) else dayahead, dtype=float)
    p_hat = grid.check_length(p_hat, "day-ahead schedule")
    estimator = opts.estimator
    if isinstance(estimator, str) and estimator not in ESTIMATORS:
        raise ValueError(f"unknown estimator {estimator!r}")

    # canonical id order makes every reduction independent of input order
    sessions = sorted(scenario.sessions, key=lambda s: s.id)
    evs = [EVState.from_session(s, scenario.realized[s.id]) for s in sessions]
    planned = np.array([scenario.is_planned(s.id) for s in sessions], dtype=bool)
    starts = np.array([s.t_start for s in sessions], dtype=int)
    stay_end = np.array([ev.session.t_start + ev.realized_d for ev in evs], dtype=int)

    fc_net = scenario.baseload_forecast - scenario.solar_forecast
    real_net = scenario.baseload - scenario.solar

    plan = np.zeros((len(evs), T))
    reserved = np.zeros(T)
    plan_iterations = 0
    if opts.reserve_pending and planned.any():
        rows = np.flatnonzero(planned)
        result = disaggregate([sessions[i] for i in rows], p_hat, grid, opts.plan)
        plan[rows] = result.schedules
        reserved = plan.sum(axis=0)
        plan_iterations = result.iterations
        if not result.converged:
            log.warning("day-ahead disaggregation stopped after %d iterations", result.iterations)

    ev_load = np.zeros(T)
    target_now = np.zeros(T)
    iterations = np.zeros(T, dtype=int)
    residual = np.zeros(T)
    converged = np.ones(T, dtype=bool)
    participants = np.zeros(T, dtype=int)
    events: list[dict] = []
    records: dict[int, EVRecord] = {}

    for tau in range(T):
        if opts.perfect_forecast:
            new_net = real_net[tau:]
        else:
            new_net = fc_net[tau:].copy()
            new_net[0] = real_net[tau]
        target = p_hat[tau:] + fc_net[tau:] - new_net

        arriving = np.flatnonzero(starts == tau)
        for i in arriving:
            evs[i].status = ACTIVE
            reserved -= plan[i]
            if not planned[i]:
                events.append({"event": "unplanned_arrival", "id": evs[i].id, "step": tau})
        # what the EVs already on site must cover
        target = target - reserved[tau:]
        target_now[tau] = target[0]

        active_idx = np.flatnonzero((starts <= tau) & (tau < stay_end))
        for i in active_idx:
            ev = evs[i]
            ev.d_hat, ev.e_hat = update_estimates(ev, tau, estimator, grid, events)
        participants[tau] = len(active_idx)

        if len(active_idx):
            group_evs = [evs[i] for i in active_idx]
            ub, lower, upper = _ev_arrays(group_evs, grid, tau)
            horizon = int(np.max(np.flatnonzero(ub.any(axis=0)), initial=0)) + 1
            ub = ub[:, :horizon]
            init = None
            if opts.warm_start:
                init = initial_schedules(ub, lower, upper, dt, opts.consensus, tau, target[:horizon])
                for row, i in enumerate(active_idx):
                    prev = evs[i].schedule
                    if prev is not None:
                        m = min(horizon, len(prev) - 1)
                        init[row, :m] = prev[1:m + 1]
                        init[row, m:] = 0.0
                    elif planned[i] and opts.reserve_pending:
                        init[row] = plan[i, tau:tau + horizon]
                # re-project: estimates may have moved since the last step
                init = best_response_batch(np.zeros(horizon), init, ub, lower, upper, dt)
            result = consensus_arrays(ub, lower, upper, target[:horizon], dt,
                                      opts.consensus, init=init, salt=tau)
            iterations[tau] = result.iterations
            residual[tau] = result.residual
            converged[tau] = result.converged
            if not result.converged:
                events.append({"event": "nonconvergence", "step": tau,
                               "iterations": result.iterations, "residual": result.residual})
            first = result.schedules[:, 0]
            for row, i in enumerate(active_idx):
                evs[i].delivered += first[row] * dt
                evs[i].schedule = result.schedules[row]
            ev_load[tau] = float(np.sum(first))

        for i in np.flatnonzero(stay_end == tau + 1):
            ev = evs[i]
            ev.status = DEPARTED
            rec = EVRecord(ev.id, ev.session.t_start, int(stay_end[i]), ev.delivered, ev.realized_e,
                           min(ev.session.rate * ev.realized_d * dt, ev.session.battery_cap),
                           bool(planned[i]))
            records[ev.id] = rec
            if rec.shortfall:
                events.append({"event": "shortfall", "id": ev.id, "step": tau + 1,
                               "shortfall_kwh": rec.shortfall_kwh})

    ordered = [records[ev.id] for ev in evs]
    return SimulationTrace(
        grid=grid, baseload=scenario.baseload.copy(), solar=scenario.solar.copy(),
        ev_load=ev_load, target=target_now, p_hat=p_hat.copy(),
        uncontrolled_ev=uncontrolled_profile(scenario), iterations=iterations, residual=residual,
        converged=converged, participants=participants, ev_records=ordered, events=events,
        plan_iterations=plan_iterations,
    )
