"""Evaluation quantities: energy cost, ramping index, ramp reduction, tracking error.

Ramping is measured as the largest absolute change between consecutive
steps (kW per step). The day-ahead stage reports its own sum-of-squares
ramp penalty separately; the two are not interchangeable.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np


def _series(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    return arr


def _aligned(a, b, names: tuple[str, str]) -> tuple[np.ndarray, np.ndarray]:
    a, b = _series(a, names[0]), _series(b, names[1])
    if a.shape != b.shape:
        raise ValueError(f"{names[0]} has {a.size} entries but {names[1]} has {b.size}")
    return a, b


def ramp_index(load) -> float:
    """Largest absolute step-to-step change of ``load`` in kW per step."""
    load = _series(load, "load")
    if load.size < 2:
        raise ValueError("ramp_index needs at least two steps")
    return float(np.max(np.abs(np.diff(load))))


def ramp_reduction(uncontrolled: float, controlled: float) -> float:
    """Percentage reduction of the ramp index, rounded to one decimal."""
    if not uncontrolled > 0:
        raise ValueError(f"uncontrolled ramp index must be positive, got {uncontrolled}")
    return round(100.0 * (uncontrolled - controlled) / uncontrolled, 1)


def total_cost(load, price, dt: float) -> float:
    """Wholesale energy cost in dollars for a kW series and a $/kWh series."""
    load, price = _aligned(load, price, ("load", "price"))
    return float(np.sum(price * load) * dt)


def tracking_rmse(target, realized) -> float:
    target, realized = _aligned(target, realized, ("target", "realized"))
    if target.size == 0:
        return 0.0
    return float(np.sqrt(np.mean((target - realized) ** 2)))


@dataclass(frozen=True)
class MetricsReport:
    total_cost_usd: float
    total_cost_uncontrolled_usd: float
    ramp_index_uncontrolled: float
    ramp_index_controlled: float
    ramp_reduction_pct: float
    tracking_rmse: float
    tracking_rmse_rel: float
    peak_load: float
    peak_step: int
    ev_count: int
    shortfall_count: int
    shortfall_kwh: float
    label: str = ""
    ramp_unit: str = "kW/step"
    load_unit: str = "kW"
    cost_unit: str = "USD"

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "MetricsReport":
        return cls(**data)


def build_report(*, baseload, solar, ev_load, uncontrolled_ev, p_hat, price, dt: float,
                 shortfalls: Sequence[float] = (), label: str = "") -> MetricsReport:
    """Assemble the per-scenario metrics from realized series.

    ``shortfalls`` lists per-EV undelivered energy (kWh); its length is the
    EV count. Tracking error compares the fleet load with the day-ahead
    schedule over the steps where the schedule is positive.
    """
    net = _series(baseload, "baseload") - _series(solar, "solar")
    controlled = net + _series(ev_load, "ev_load")
    uncontrolled = net + _series(uncontrolled_ev, "uncontrolled_ev")
    p_hat = _series(p_hat, "p_hat")
    ru, rc = ramp_index(uncontrolled), ramp_index(controlled)
    mask = p_hat > 0
    rmse = tracking_rmse(p_hat[mask], np.asarray(ev_load, dtype=float)[mask])
    mean_hat = float(p_hat[mask].mean()) if mask.any() else 0.0
    peak = int(np.argmax(controlled))
    short = np.asarray(shortfalls, dtype=float)
    return MetricsReport(
        total_cost_usd=total_cost(controlled, price, dt),
        total_cost_uncontrolled_usd=total_cost(uncontrolled, price, dt),
        ramp_index_uncontrolled=ru,
        ramp_index_controlled=rc,
        ramp_reduction_pct=ramp_reduction(ru, rc) if ru > 0 else math.nan,
        tracking_rmse=rmse,
        tracking_rmse_rel=rmse / mean_hat if mean_hat > 0 else 0.0,
        peak_load=float(controlled[peak]),
        peak_step=peak,
        ev_count=int(short.size),
        shortfall_count=int(np.sum(short > 1e-6)),
        shortfall_kwh=float(short.sum()),
        label=label,
    )


def report_from_trace(trace, price, label: str = "") -> MetricsReport:
    """Metrics for a :class:`~evgrid.allocation.SimulationTrace`."""
    return build_report(
        baseload=trace.baseload, solar=trace.solar, ev_load=trace.ev_load,
        uncontrolled_ev=trace.uncontrolled_ev, p_hat=trace.p_hat, price=price,
        dt=trace.grid.step_hours, shortfalls=[r.shortfall_kwh for r in trace.ev_records],
        label=label,
    )


_TABLE_ROWS = (
    ("EVs", "ev_count", "{:d}"),
    ("Uncontrolled max ramp (kW/step)", "ramp_index_uncontrolled", "{:.1f}"),
    ("Controlled max ramp (kW/step)", "ramp_index_controlled", "{:.1f}"),
    ("Max. ramp reduction (%)", "ramp_reduction_pct", "{:.1f}"),
    ("Total cost (USD)", "total_cost_usd", "{:.2f}"),
    ("Uncontrolled cost (USD)", "total_cost_uncontrolled_usd", "{:.2f}"),
    ("Tracking RMSE (kW)", "tracking_rmse", "{:.3f}"),
    ("Shortfalls", "shortfall_count", "{:d}"),
)


def table_rows(reports: Sequence[MetricsReport]) -> list[list[str]]:
    """One header row of scenario labels, then one row per metric."""
    header = ["Metric"] + [r.label or str(r.ev_count) for r in reports]
    rows = [header]
    for title, key, fmt in _TABLE_ROWS:
        rows.append([title] + [fmt.format(getattr(r, key)) for r in reports])
    return rows


def format_table(reports: Sequence[MetricsReport]) -> str:
    """Plain-text table with one column per scenario run."""
    rows = table_rows(reports)
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    lines = []
    for n, row in enumerate(rows):
        cells = [row[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(row[1:], widths[1:])]
        lines.append("  ".join(cells).rstrip())
        if n == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"
