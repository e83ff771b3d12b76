"""Synthetic charging behaviour: session sampling and real-time perturbations.

Default distributions are engineering stand-ins (bimodal arrivals around
08:00 and 18:00, log-normal stays with a 6 h median, Beta(2, 2) session
flexibility) and are meant to be overridden from config.

Session flexibility ``f`` is the fraction of the stay *not* needed for
charging: ``e_req = (1 - f) * p_max * eta * duration``. Higher ``f`` means
more room to defer.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .flex_model import ChargingSession, TimeGrid


@dataclass(frozen=True)
class StartComponent:
    mean_hour: float
    std_hour: float
    weight: float


def _default_starts() -> tuple[StartComponent, ...]:
    return (StartComponent(8.0, 1.5, 0.5), StartComponent(18.0, 2.0, 0.5))


@dataclass(frozen=True)
class BehaviorConfig:
    start_mixture: tuple[StartComponent, ...] = field(default_factory=_default_starts)
    duration_mu: float = math.log(6.0)  # log-hours
    duration_sigma: float = 0.5
    duration_min_hours: float = 0.5
    duration_max_hours: float = 14.0
    flex_alpha: float = 2.0
    flex_beta: float = 2.0
    p_max: float = 6.6
    eta: float = 1.0
    battery_cap: float = 60.0

    def __post_init__(self):
        comps = tuple(c if isinstance(c, StartComponent) else StartComponent(**c) for c in self.start_mixture)
        object.__setattr__(self, "start_mixture", comps)
        if not comps:
            raise ValueError("start_mixture needs at least one component")
        if abs(sum(c.weight for c in comps) - 1.0) > 1e-9:
            raise ValueError("start_mixture weights must sum to 1")
        if any(c.weight < 0 or c.std_hour < 0 for c in comps):
            raise ValueError("start_mixture weights and stds must be non-negative")
        if not 0 < self.duration_min_hours <= self.duration_max_hours:
            raise ValueError("need 0 < duration_min_hours <= duration_max_hours")
        if self.duration_sigma < 0:
            raise ValueError("duration_sigma must be non-negative")
        if self.flex_alpha <= 0 or self.flex_beta <= 0:
            raise ValueError("Beta parameters must be positive")
        if self.p_max <= 0 or not 0 < self.eta <= 1 or self.battery_cap <= 0:
            raise ValueError("p_max, eta and battery_cap out of range")

    @property
    def mean_start_hour(self) -> float:
        return sum(c.weight * c.mean_hour for c in self.start_mixture)

    @property
    def start_hour_variance(self) -> float:
        m = self.mean_start_hour
        return sum(c.weight * (c.std_hour ** 2 + (c.mean_hour - m) ** 2) for c in self.start_mixture)

    @property
    def mean_flexibility(self) -> float:
        return self.flex_alpha / (self.flex_alpha + self.flex_beta)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["start_mixture"] = [asdict(c) for c in self.start_mixture]
        return d


@dataclass(frozen=True)
class PerturbationConfig:
    sigma_d: float = 0.0        # steps
    sigma_e: float = 0.0        # kWh
    sigma_e_rel: float = 0.0    # fraction of the declared demand, added to sigma_e
    profile_sigma: float = 0.0  # relative
    seed: int = 0

    def __post_init__(self):
        for name in ("sigma_d", "sigma_e", "sigma_e_rel", "profile_sigma"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def sessions_off(self) -> bool:
        return self.sigma_d == 0 and self.sigma_e == 0 and self.sigma_e_rel == 0


def energy_from_flexibility(f: float, duration: int, p_max: float, eta: float, dt: float) -> float:
    """Energy demand (kWh) of a session that charges ``1 - f`` of its stay."""
    if not 0 <= f < 1:
        raise ValueError(f"flexibility must lie in [0, 1), got {f}")
    return (1.0 - f) * p_max * eta * duration * dt


def sample_sessions(cfg: BehaviorConfig, n: int, grid: TimeGrid, seed: int) -> list[ChargingSession]:
    """Draw ``n`` valid sessions; ids are ``0 .. n-1``."""
    if n < 0:
        raise ValueError("n must be non-negative")
    if n == 0:
        return []
    rng = np.random.default_rng(seed)
    dt = grid.step_hours
    weights = np.array([c.weight for c in cfg.start_mixture])
    comp = rng.choice(len(weights), size=n, p=weights)
    means = np.array([c.mean_hour for c in cfg.start_mixture])[comp]
    stds = np.array([c.std_hour for c in cfg.start_mixture])[comp]
    start_hours = rng.normal(means, stds)
    stay_hours = np.clip(rng.lognormal(cfg.duration_mu, cfg.duration_sigma, n),
                         cfg.duration_min_hours, cfg.duration_max_hours)
    flex = rng.beta(cfg.flex_alpha, cfg.flex_beta, n)

    starts = np.clip(np.rint(start_hours / dt), 0, grid.steps - 1).astype(int)
    durations = np.maximum(1, np.rint(stay_hours / dt)).astype(int)
    durations = np.minimum(durations, grid.steps - starts)
    flex = np.minimum(flex, np.nextafter(1.0, 0.0))

    sessions = []
    for i in range(n):
        e = energy_from_flexibility(float(flex[i]), int(durations[i]), cfg.p_max, cfg.eta, dt)
        sessions.append(ChargingSession(
            id=i, t_start=int(starts[i]), duration=int(durations[i]),
            e_req=min(e, cfg.battery_cap), p_max=cfg.p_max, eta=cfg.eta,
            battery_cap=cfg.battery_cap,
        ))
    return sessions


def session_rng(seed: int, session_id: int) -> np.random.Generator:
    """Noise stream keyed on (seed, id) so adding an EV leaves others untouched."""
    return np.random.default_rng([seed, session_id])


def perturb_session(session: ChargingSession, cfg: PerturbationConfig, grid: TimeGrid,
                    rng: np.random.Generator | None = None) -> tuple[int, float]:
    """Realized ``(duration, energy)`` for a declared session."""
    rng = rng if rng is not None else session_rng(cfg.seed, session.id)
    nd, ne = rng.standard_normal(2)
    d = int(np.clip(round(session.duration + cfg.sigma_d * nd), 1, grid.steps - session.t_start))
    sigma_e = cfg.sigma_e + cfg.sigma_e_rel * session.e_req
    cap = min(session.rate * d * grid.step_hours, session.battery_cap)
    e = float(np.clip(session.e_req + sigma_e * ne, 0.0, cap))
    return d, e


def perturb_profile(series, profile_sigma: float, rng: np.random.Generator,
                    nonnegative: bool = False) -> np.ndarray:
    """Multiply each entry by ``1 + N(0, profile_sigma)``."""
    series = np.asarray(series, dtype=float)
    if profile_sigma == 0:
        return series.copy()
    out = series * (1.0 + profile_sigma * rng.standard_normal(series.shape))
    return np.maximum(out, 0.0) if nonnegative else out
