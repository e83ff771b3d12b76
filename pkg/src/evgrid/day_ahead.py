"""First-stage aggregator problem: wholesale cost plus a quadratic ramp penalty.

    min_P  sum_t price(t) * L(t) * dt  +  theta * sum_t (L(t+1) - L(t))^2
    L(t)  = baseload(t) - solar(t) + P(t)

subject to the aggregate power box and cumulative-energy band. Solved by
accelerated projected gradient (FISTA with monotone restart); each
projection runs Dykstra over the box and the band.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .flex_model import AggregateEnvelope, TimeGrid, check_feasible
from .projection import project_polytope

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DayAheadInput:
    price: np.ndarray
    baseload: np.ndarray
    solar: np.ndarray
    theta: float
    grid: TimeGrid

    def __post_init__(self):
        for name in ("price", "baseload", "solar"):
            arr = self.grid.check_length(getattr(self, name), name)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")
            object.__setattr__(self, name, arr)
        if np.any(self.solar < 0):
            raise ValueError("solar forecast must be non-negative")
        if not self.theta >= 0:
            raise ValueError(f"theta must be non-negative, got {self.theta}")

    @property
    def netload(self) -> np.ndarray:
        return self.baseload - self.solar


@dataclass
class SolverOptions:
    max_iters: int = 5000
    opt_tol: float = 1e-6
    feas_tol: float | None = None  # default 1e-6 * max(P_plus)
    proj_tol: float = 1e-9
    proj_max_iters: int = 20000


@dataclass
class SolverStats:
    iterations: int
    feas_residual: float
    opt_residual: float
    converged: bool
    projection_sweeps: int = 0


@dataclass
class DayAheadSchedule:
    p_hat: np.ndarray
    cost_term: float
    ramp_term: float
    objective: float
    stats: SolverStats = field(default_factory=lambda: SolverStats(0, 0.0, 0.0, True))

    def summary(self) -> dict:
        return {
            "objective": self.objective,
            "cost_term": self.cost_term,
            "ramp_term": self.ramp_term,
            "solver": {
                "iterations": self.stats.iterations,
                "feas_residual": self.stats.feas_residual,
                "opt_residual": self.stats.opt_residual,
                "converged": self.stats.converged,
                "projection_sweeps": self.stats.projection_sweeps,
            },
        }


class DayAheadConvergenceError(RuntimeError):
    """Solver hit its iteration cap; ``best`` holds the last feasible iterate."""

    def __init__(self, message: str, best: DayAheadSchedule):
        super().__init__(message)
        self.best = best


def day_ahead_objective(P, inp: DayAheadInput) -> tuple[float, float, float]:
    """Return ``(cost_term, ramp_term, objective)`` for an aggregate profile."""
    P = inp.grid.check_length(P, "power profile")
    load = inp.netload + P
    cost = float(np.sum(inp.price * load) * inp.grid.step_hours)
    ramp = float(inp.theta * np.sum(np.diff(load) ** 2))
    return cost, ramp, cost + ramp


def _gradient(P: np.ndarray, inp: DayAheadInput) -> np.ndarray:
    d = np.diff(inp.netload + P)
    g = inp.price * inp.grid.step_hours
    g[:-1] -= 2 * inp.theta * d
    g[1:] += 2 * inp.theta * d
    return g


def solve_day_ahead(inp: DayAheadInput, agg: AggregateEnvelope,
                    opts: SolverOptions | None = None) -> DayAheadSchedule:
    opts = opts or SolverOptions()
    grid = inp.grid
    if len(agg) != grid.steps:
        raise ValueError(f"envelope has {len(agg)} steps, grid has {grid.steps}")
    dt = grid.step_hours
    p_scale = float(np.max(agg.P_plus, initial=0.0))
    feas_tol = opts.feas_tol if opts.feas_tol is not None else 1e-6 * max(p_scale, 1.0)

    sweeps = 0
    warm = None

    def project(y):
        nonlocal sweeps, warm
        res = project_polytope(y, agg.P_minus, agg.P_plus, agg.E_minus, agg.E_plus, dt,
                               tol=opts.proj_tol, max_iter=opts.proj_max_iters, warm=warm)
        sweeps += res.iterations
        warm = res.increments
        return res.x

    # Hessian is 2*theta*D'D with ||D'D|| <= 4; the floor keeps a finite step
    # for the pure LP (theta = 0) so one step moves at most ~max(P_plus).
    lipschitz = 8.0 * inp.theta
    g_scale = float(np.max(np.abs(inp.price))) * dt
    if p_scale > 0 and g_scale > 0:
        lipschitz = max(lipschitz, g_scale / p_scale)
    if lipschitz <= 0:
        lipschitz = 1.0
    step = 1.0 / lipschitz

    def objective(P):
        return day_ahead_objective(P, inp)[2]

    def grad_map(P):
        return (P - project(P - step * _gradient(P, inp))) / step

    x = project(np.clip(agg.E_plus - np.concatenate(([0.0], agg.E_plus[:-1])), 0, None) / dt)
    fx = objective(x)
    y, t_k = x.copy(), 1.0
    opt_res = np.inf
    it = 0
    for it in range(1, opts.max_iters + 1):
        x_new = project(y - step * _gradient(y, inp))
        f_new = objective(x_new)
        if f_new > fx:
            # monotone restart: retake a plain step from x
            y, t_k = x.copy(), 1.0
            x_new = project(x - step * _gradient(x, inp))
            f_new = objective(x_new)
        t_next = 0.5 * (1 + np.sqrt(1 + 4 * t_k * t_k))
        y = x_new + ((t_k - 1) / t_next) * (x_new - x)
        moved = np.max(np.abs(x_new - x))
        x, fx, t_k = x_new, f_new, t_next
        if moved <= opts.opt_tol * step or it % 10 == 0:
            opt_res = float(np.max(np.abs(grad_map(x))))
            if opt_res <= opts.opt_tol:
                break

    report = check_feasible(x, agg, grid, tol=0.0)
    feas_res = max((v.magnitude for v in report.violations), default=0.0)
    cost, ramp, total = day_ahead_objective(x, inp)
    stats = SolverStats(it, feas_res, opt_res, opt_res <= opts.opt_tol and feas_res <= feas_tol, sweeps)
    schedule = DayAheadSchedule(x, cost, ramp, total, stats)
    log.info("day-ahead: %d iterations, objective %.6g, opt residual %.3g", it, total, opt_res)
    if not stats.converged:
        raise DayAheadConvergenceError(
            f"day-ahead solver stopped after {it} iterations "
            f"(opt residual {opt_res:.3g}, feas residual {feas_res:.3g})", schedule)
    return schedule
