"""A fully realized simulation input: declared plan plus hidden truth."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .behavior import PerturbationConfig, perturb_profile, perturb_session
from .flex_model import ChargingSession, TimeGrid

# stream tags for profile noise; sessions use their own ids
_BASELOAD_STREAM = 1_000_003
_SOLAR_STREAM = 1_000_033


@dataclass
class Scenario:
    grid: TimeGrid
    sessions: list[ChargingSession]
    price: np.ndarray
    baseload_forecast: np.ndarray
    solar_forecast: np.ndarray
    baseload: np.ndarray
    solar: np.ndarray
    # id -> (duration steps, energy kWh) actually observed
    realized: dict[int, tuple[int, float]] = field(default_factory=dict)
    # ids the day-ahead plan knows about; None means every session
    planned_ids: frozenset[int] | None = None

    def __post_init__(self):
        g = self.grid
        for name in ("price", "baseload_forecast", "solar_forecast", "baseload", "solar"):
            setattr(self, name, g.check_length(getattr(self, name), name))
        ids = [s.id for s in self.sessions]
        if len(set(ids)) != len(ids):
            raise ValueError("session ids must be unique")
        for s in self.sessions:
            s.check_window(g)
            self.realized.setdefault(s.id, (s.duration, s.e_req))

    def is_planned(self, session_id: int) -> bool:
        return self.planned_ids is None or session_id in self.planned_ids

    @property
    def planned_sessions(self) -> list[ChargingSession]:
        return [s for s in self.sessions if self.is_planned(s.id)]


def realize_scenario(grid: TimeGrid, sessions: list[ChargingSession], price, baseload, solar,
                     perturbation: PerturbationConfig | None = None,
                     planned_ids: frozenset[int] | None = None) -> Scenario:
    """Apply session and profile perturbations to a declared plan."""
    cfg = perturbation or PerturbationConfig()
    baseload = np.asarray(baseload, dtype=float)
    solar = np.asarray(solar, dtype=float)
    realized = {s.id: perturb_session(s, cfg, grid) for s in sessions}
    rb = perturb_profile(baseload, cfg.profile_sigma, np.random.default_rng([cfg.seed, _BASELOAD_STREAM]))
    rs = perturb_profile(solar, cfg.profile_sigma, np.random.default_rng([cfg.seed, _SOLAR_STREAM]),
                         nonnegative=True)
    return Scenario(grid, list(sessions), price, baseload, solar, rb, rs, realized, planned_ids)
