"""Deterministic synthetic community profiles.

Stand-ins for measured campus netload, rooftop PV and wholesale prices.
Shapes are smooth daily curves; nothing here is random, so a profile is a
pure function of the grid and its parameters. Real-time noise is layered on
separately by :func:`evgrid.behavior.perturb_profile`.
"""

from __future__ import annotations

import numpy as np

from .flex_model import TimeGrid


def _bump(hours: np.ndarray, center: float, width: float) -> np.ndarray:
    return np.exp(-0.5 * ((hours - center) / width) ** 2)


def campus_baseload(grid: TimeGrid, floor_kw: float = 2500.0, peak_kw: float = 4500.0) -> np.ndarray:
    """Weekday campus load: overnight floor, broad daytime plateau, evening tail."""
    h = (grid.hours + 0.5 * grid.step_hours) % 24.0
    shape = 0.85 * _bump(h, 13.0, 3.5) + 0.25 * _bump(h, 19.5, 2.0)
    shape = shape / shape.max()
    return floor_kw + (peak_kw - floor_kw) * shape


def solar_pv(grid: TimeGrid, peak_kw: float = 1200.0, sunrise: float = 6.0, sunset: float = 19.0) -> np.ndarray:
    h = (grid.hours + 0.5 * grid.step_hours) % 24.0
    phase = (h - sunrise) / (sunset - sunrise)
    out = np.where((phase > 0) & (phase < 1), np.sin(np.pi * np.clip(phase, 0, 1)), 0.0)
    return peak_kw * out ** 1.5


def duck_price(grid: TimeGrid, night: float = 0.035, midday: float = 0.018,
               evening: float = 0.085, morning: float = 0.045) -> np.ndarray:
    """Wholesale price ($/kWh) with a midday solar trough and an evening peak."""
    h = (grid.hours + 0.5 * grid.step_hours) % 24.0
    price = (night
             + (morning - night) * _bump(h, 7.5, 1.5)
             + (midday - night) * _bump(h, 13.0, 2.5)
             + (evening - night) * _bump(h, 19.0, 1.8))
    return price


SYNTHETIC = {
    "campus": campus_baseload,
    "pv": solar_pv,
    "duck": duck_price,
}
