"""Scenario configuration, series ingestion and run artifacts.

Formats:

* series CSV: ``step,value`` or ``timestamp,value``; timestamped input is
  resampled onto the grid (hold when coarser, mean when finer),
* sessions CSV: ``id,start_step,duration_steps,energy_kwh,pmax_kw,eta,battery_kwh``,
* schedules, traces and per-EV records as CSV; events as JSON lines;
  configuration and manifests as JSON.

Floats are written with ``repr`` so every value survives a round trip.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import platform
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Sequence

import jsonschema
import numpy as np
import scipy

from . import __version__
from .allocation import ConsensusOptions, EVRecord, SimulationOptions, SimulationTrace
from .behavior import BehaviorConfig, PerturbationConfig, sample_sessions
from .day_ahead import DayAheadSchedule, SolverOptions
from .flex_model import AggregateEnvelope, ChargingSession, TimeGrid, repair_session
from .metrics import MetricsReport
from .profiles import SYNTHETIC
from .scenario import Scenario, realize_scenario

OUT_ENV = "EVGRID_OUT"
DEFAULT_OUT = "evgrid-out"

SESSION_COLUMNS = ("id", "start_step", "duration_steps", "energy_kwh", "pmax_kw", "eta", "battery_kwh")
TRACE_COLUMNS = ("step", "baseload_kw", "solar_kw", "ev_kw", "target_kw", "iters", "residual",
                 "p_hat_kw", "uncontrolled_ev_kw")
PER_EV_COLUMNS = ("id", "arrive", "depart", "delivered_kwh", "required_kwh", "shortfall")
PROFILE_COLUMNS = ("step", "hour", "price_usd_per_kwh", "baseload_forecast_kw", "solar_forecast_kw",
                   "baseload_kw", "solar_kw")

_UNITS = {"baseload": "kW", "solar": "kW", "price": "USD/kWh"}
_DEFAULT_PROFILES = {"baseload": {"synthetic": "campus"}, "solar": {"synthetic": "pv"},
                     "price": {"synthetic": "duck"}}


class InputError(ValueError):
    """Invalid configuration or input data; the message carries its location."""


def fmt(x) -> str:
    """Round-trip text form of a number."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _read_csv(path, what: str) -> tuple[list[str], list[tuple[int, list[str]]]]:
    """Header and ``(line number, cells)`` rows; blank lines are skipped."""
    path = Path(path)
    try:
        with open(path, newline="") as f:
            lines = list(csv.reader(f))
    except FileNotFoundError:
        raise InputError(f"{path}: {what} file not found") from None
    except OSError as exc:
        raise InputError(f"{path}: cannot read {what} file ({exc.strerror})") from None
    numbered = [(n, [c.strip() for c in row]) for n, row in enumerate(lines, start=1) if any(c.strip() for c in row)]
    if not numbered:
        raise InputError(f"{path}: {what} file is empty")
    return numbered[0][1], numbered[1:]


def _number(cell: str, path, line: int, column: str, integer: bool = False):
    try:
        value = int(cell) if integer else float(cell)
    except ValueError:
        kind = "an integer" if integer else "a number"
        raise InputError(f"{path}: row {line}, column {column!r}: expected {kind}, got {cell!r}") from None
    if not integer and not math.isfinite(value):
        raise InputError(f"{path}: row {line}, column {column!r}: non-finite value {cell!r}")
    return value


# -- time series -----------------------------------------------------------------

@dataclass(frozen=True)
class Timeseries:
    values: np.ndarray
    unit: str
    grid: TimeGrid

    def __post_init__(self):
        arr = self.grid.check_length(self.values, "series")
        if not np.all(np.isfinite(arr)):
            raise InputError("series contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)


def _resample(values: np.ndarray, ratio: float, steps: int, path) -> np.ndarray:
    """Map a series sampled every ``ratio`` grid steps onto the grid."""
    if ratio >= 1:
        k = round(ratio)
        if abs(k - ratio) > 1e-9:
            raise InputError(f"{path}: sample interval is not a whole number of grid steps")
        out = np.repeat(values, k)
    else:
        k = round(1 / ratio)
        if abs(k - 1 / ratio) > 1e-9:
            raise InputError(f"{path}: grid step is not a whole number of sample intervals")
        if values.size % k:
            raise InputError(f"{path}: {values.size} rows do not fill whole grid steps of {k} samples")
        out = values.reshape(-1, k).mean(axis=1)
    if out.size != steps:
        raise InputError(f"{path}: {values.size} rows resample to {out.size} steps, grid has {steps}")
    return out


def load_timeseries_csv(path, expected_unit: str, grid: TimeGrid) -> Timeseries:
    """Read a ``step,value`` or ``timestamp,value`` CSV onto ``grid``.

    Step-indexed files must number rows ``0..n-1``; when ``n`` differs from
    the grid length the sampling interval is taken as ``T / n`` steps.
    Timestamped files must be evenly spaced and start at the grid origin.
    """
    header, rows = _read_csv(path, "series")
    key = [h.lower() for h in header]
    if key not in (["step", "value"], ["timestamp", "value"]):
        raise InputError(f"{path}: row 1: header must be 'step,value' or 'timestamp,value', got {','.join(header)!r}")
    if not rows:
        raise InputError(f"{path}: no data rows")
    values = np.empty(len(rows))
    stamps: list[datetime] = []
    for i, (line, cells) in enumerate(rows):
        if len(cells) != 2:
            raise InputError(f"{path}: row {line}: expected 2 cells, got {len(cells)}")
        values[i] = _number(cells[1], path, line, "value")
        if key[0] == "step":
            step = _number(cells[0], path, line, "step", integer=True)
            if step != i:
                raise InputError(f"{path}: row {line}: expected step {i}, got {step}")
        else:
            try:
                stamps.append(datetime.fromisoformat(cells[0]))
            except ValueError:
                raise InputError(f"{path}: row {line}: bad timestamp {cells[0]!r}") from None

    if key[0] == "step":
        ratio = grid.steps / len(rows)
    else:
        first_line = rows[0][0]
        origin = datetime.strptime(grid.origin, "%H:%M").time()
        if stamps[0].time() != origin:
            raise InputError(f"{path}: row {first_line}: series starts at {stamps[0].time()}, "
                             f"grid origin is {grid.origin}")
        if len(stamps) == 1:
            ratio = float(grid.steps)
        else:
            gaps = np.array([(b - a).total_seconds() for a, b in zip(stamps, stamps[1:])]) / 3600.0
            bad = np.flatnonzero(np.abs(gaps - gaps[0]) > 1e-9)
            if gaps[0] <= 0:
                raise InputError(f"{path}: row {rows[1][0]}: timestamps must increase")
            if bad.size:
                raise InputError(f"{path}: row {rows[bad[0] + 1][0]}: uneven timestamp spacing")
            ratio = gaps[0] / grid.step_hours
    return Timeseries(_resample(values, ratio, grid.steps, path), expected_unit, grid)


def write_series_csv(path, values) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["step", "value"])
        for t, v in enumerate(np.asarray(values, dtype=float)):
            w.writerow([t, fmt(v)])


# -- sessions --------------------------------------------------------------------

def read_sessions_csv(path, grid: TimeGrid) -> tuple[list[ChargingSession], list[dict]]:
    """Sessions plus repair events for demands the stay cannot deliver.

    A blank ``battery_kwh`` cell means an unbounded battery.
    """
    header, rows = _read_csv(path, "sessions")
    if tuple(h.lower() for h in header) != SESSION_COLUMNS:
        raise InputError(f"{path}: row 1: header must be {','.join(SESSION_COLUMNS)!r}")
    sessions, events, seen = [], [], {}
    for line, cells in rows:
        if len(cells) != len(SESSION_COLUMNS):
            raise InputError(f"{path}: row {line}: expected {len(SESSION_COLUMNS)} cells, got {len(cells)}")
        sid = _number(cells[0], path, line, "id", integer=True)
        if sid in seen:
            raise InputError(f"{path}: row {line}: duplicate id {sid} (first on row {seen[sid]})")
        seen[sid] = line
        cap = math.inf if cells[6] == "" else _number(cells[6], path, line, "battery_kwh")
        try:
            s = ChargingSession(
                id=sid,
                t_start=_number(cells[1], path, line, "start_step", integer=True),
                duration=_number(cells[2], path, line, "duration_steps", integer=True),
                e_req=_number(cells[3], path, line, "energy_kwh"),
                p_max=_number(cells[4], path, line, "pmax_kw"),
                eta=_number(cells[5], path, line, "eta"),
                battery_cap=cap,
            )
            s.check_window(grid)
        except InputError:
            raise
        except ValueError as exc:
            raise InputError(f"{path}: row {line}: {exc}") from None
        s, event = repair_session(s, grid)
        if event is not None:
            events.append(event.as_dict())
        sessions.append(s)
    return sessions, events


def write_sessions_csv(path, sessions: Iterable[ChargingSession]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(SESSION_COLUMNS)
        for s in sessions:
            cap = "" if math.isinf(s.battery_cap) else fmt(s.battery_cap)
            w.writerow([s.id, s.t_start, s.duration, fmt(s.e_req), fmt(s.p_max), fmt(s.eta), cap])


def write_envelope_csv(path, env: AggregateEnvelope) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["step", "e_plus_kwh", "e_minus_kwh", "p_plus_kw", "p_minus_kw"])
        for t in range(len(env)):
            w.writerow([t, fmt(env.E_plus[t]), fmt(env.E_minus[t]), fmt(env.P_plus[t]), fmt(env.P_minus[t])])


# -- schedules and traces ----------------------------------------------------------

def write_schedule_csv(path, p_hat) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["step", "p_hat_kw"])
        for t, v in enumerate(np.asarray(p_hat, dtype=float)):
            w.writerow([t, fmt(v)])


def read_schedule_csv(path, grid: TimeGrid) -> np.ndarray:
    header, rows = _read_csv(path, "schedule")
    if [h.lower() for h in header] != ["step", "p_hat_kw"]:
        raise InputError(f"{path}: row 1: header must be 'step,p_hat_kw'")
    out = np.empty(len(rows))
    for i, (line, cells) in enumerate(rows):
        if len(cells) != 2 or _number(cells[0], path, line, "step", integer=True) != i:
            raise InputError(f"{path}: row {line}: expected step {i}")
        out[i] = _number(cells[1], path, line, "p_hat_kw")
    if out.size != grid.steps:
        raise InputError(f"{path}: schedule has {out.size} steps, grid has {grid.steps}")
    return out


def _read_table(path, columns: Sequence[str], what: str) -> dict[str, np.ndarray]:
    header, rows = _read_csv(path, what)
    missing = [c for c in columns if c not in header]
    if missing:
        raise InputError(f"{path}: row 1: missing columns {', '.join(missing)}")
    idx = [header.index(c) for c in columns]
    data = {c: np.empty(len(rows)) for c in columns}
    for i, (line, cells) in enumerate(rows):
        if len(cells) != len(header):
            raise InputError(f"{path}: row {line}: expected {len(header)} cells, got {len(cells)}")
        for c, j in zip(columns, idx):
            cell = cells[j]
            if cell in ("true", "false"):
                data[c][i] = cell == "true"
            else:
                data[c][i] = _number(cell, path, line, c)
    return data


def read_trace_csv(path) -> dict[str, np.ndarray]:
    return _read_table(path, TRACE_COLUMNS, "trace")


def read_per_ev_csv(path) -> dict[str, np.ndarray]:
    return _read_table(path, PER_EV_COLUMNS, "per-EV")


def read_profiles_csv(path) -> dict[str, np.ndarray]:
    return _read_table(path, PROFILE_COLUMNS, "profiles")


# -- configuration ---------------------------------------------------------------

@lru_cache(maxsize=1)
def scenario_schema() -> dict:
    text = resources.files("evgrid").joinpath("schemas/scenario.schema.json").read_text()
    return json.loads(text)


def _json_path(error: jsonschema.ValidationError) -> str:
    path = "$"
    for part in error.absolute_path:
        path += f"[{part}]" if isinstance(part, int) else f".{part}"
    return path


def validate_config(data: Any) -> None:
    validator = jsonschema.Draft202012Validator(scenario_schema())
    errors = sorted(validator.iter_errors(data), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    if errors:
        e = errors[0]
        # oneOf failures are more useful reported through their closest branch
        if e.validator == "oneOf" and e.context:
            e = min(e.context, key=lambda c: (len(c.absolute_path) * -1, c.message))
        raise InputError(f"{_json_path(e)}: {e.message}")


@dataclass(frozen=True)
class ScenarioConfig:
    grid: TimeGrid = field(default_factory=lambda: TimeGrid(96, 0.25))
    profiles: dict = field(default_factory=lambda: dict(_DEFAULT_PROFILES))
    sessions: dict = field(default_factory=lambda: {"n": 1240})
    seed: int = 0
    theta: float = 0.01
    consensus: ConsensusOptions = field(default_factory=ConsensusOptions)
    perturbation: PerturbationConfig = field(default_factory=PerturbationConfig)
    reserve_pending: bool = True
    warm_start: bool = True
    unplanned_ids: tuple[int, ...] = ()
    solver: SolverOptions = field(default_factory=SolverOptions)
    estimator: str = "declared-persistence"
    perfect_forecast: bool = True
    output_dir: str | None = None
    base_dir: str = "."

    @property
    def behavior(self) -> BehaviorConfig:
        return BehaviorConfig(**self.sessions.get("behavior", {}))

    def simulation_options(self) -> SimulationOptions:
        return SimulationOptions(consensus=self.consensus, estimator=self.estimator,
                                 perfect_forecast=self.perfect_forecast,
                                 reserve_pending=self.reserve_pending, warm_start=self.warm_start)

    def resolved(self) -> dict:
        """Complete config with every default filled in (JSON-ready)."""
        c, p, s = self.consensus, self.perturbation, self.solver
        sessions = dict(self.sessions)
        if "n" in sessions:
            sessions["behavior"] = self.behavior.as_dict()
        out = {
            "grid": {"steps": self.grid.steps, "step_hours": self.grid.step_hours, "origin": self.grid.origin},
            "profiles": {k: dict(v) for k, v in self.profiles.items()},
            "sessions": sessions,
            "seed": self.seed,
            "theta": self.theta,
            "consensus": {"beta": c.beta, "err_tol": c.err_tol, "k_max": c.k_max, "init": c.init},
            "perturbation": {"sigma_d": p.sigma_d, "sigma_e": p.sigma_e, "sigma_e_rel": p.sigma_e_rel,
                             "profile_sigma": p.profile_sigma},
            "simulation": {"reserve_pending": self.reserve_pending, "warm_start": self.warm_start,
                           "unplanned_ids": list(self.unplanned_ids)},
            "solver": {"max_iters": s.max_iters, "opt_tol": s.opt_tol},
            "estimator": self.estimator,
            "perfect_forecast": self.perfect_forecast,
        }
        if self.output_dir is not None:
            out["output_dir"] = self.output_dir
        return out

    def with_overrides(self, *, seed=None, theta=None, beta=None, evs=None, perfect_forecast=None,
                       output_dir=None) -> "ScenarioConfig":
        """Apply command-line overrides; ``None`` leaves a value untouched."""
        cfg = self
        if seed is not None:
            if seed < 0:
                raise InputError("--seed must be non-negative")
            cfg = replace(cfg, seed=seed, consensus=replace(cfg.consensus, seed=seed),
                          perturbation=replace(cfg.perturbation, seed=seed))
        if theta is not None:
            if not theta >= 0:
                raise InputError("--theta must be non-negative")
            cfg = replace(cfg, theta=theta)
        if beta is not None:
            if not beta > 0:
                raise InputError("--beta must be positive")
            cfg = replace(cfg, consensus=replace(cfg.consensus, beta=beta))
        if evs is not None:
            if "n" not in cfg.sessions:
                raise InputError("--evs overrides the session generator, but sessions come from a file")
            if evs < 0:
                raise InputError("--evs must be non-negative")
            cfg = replace(cfg, sessions={**cfg.sessions, "n": evs})
        if perfect_forecast is not None:
            cfg = replace(cfg, perfect_forecast=perfect_forecast)
        if output_dir is not None:
            cfg = replace(cfg, output_dir=output_dir)
        return cfg


def config_from_dict(data: Any, base_dir=".") -> ScenarioConfig:
    """Validate a config document and apply defaults."""
    validate_config(data)
    g = data.get("grid", {})
    try:
        grid = TimeGrid(g.get("steps", 96), g.get("step_hours", 0.25), g.get("origin", "00:00"))
    except ValueError as exc:
        raise InputError(f"$.grid: {exc}") from None
    seed = data.get("seed", 0)
    profiles = {**_DEFAULT_PROFILES, **data.get("profiles", {})}
    sessions = data.get("sessions", {"n": 1240})
    if "behavior" in sessions:
        try:
            BehaviorConfig(**sessions["behavior"])
        except ValueError as exc:
            raise InputError(f"$.sessions.behavior: {exc}") from None
    sim = data.get("simulation", {})
    try:
        consensus = ConsensusOptions(seed=seed, **data.get("consensus", {}))
        perturbation = PerturbationConfig(seed=seed, **data.get("perturbation", {}))
    except ValueError as exc:
        raise InputError(f"$: {exc}") from None
    return ScenarioConfig(
        grid=grid, profiles=profiles, sessions=dict(sessions), seed=seed,
        theta=float(data.get("theta", 0.01)), consensus=consensus, perturbation=perturbation,
        reserve_pending=sim.get("reserve_pending", True), warm_start=sim.get("warm_start", True),
        unplanned_ids=tuple(sim.get("unplanned_ids", ())),
        solver=SolverOptions(**data.get("solver", {})),
        estimator=data.get("estimator", "declared-persistence"),
        perfect_forecast=data.get("perfect_forecast", True),
        output_dir=data.get("output_dir"), base_dir=str(base_dir),
    )


def parse_scenario(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise InputError(f"{path}: config file not found") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: line {exc.lineno}: invalid JSON ({exc.msg})") from None
    try:
        cfg = config_from_dict(data, base_dir=path.parent)
    except InputError as exc:
        raise InputError(f"{path}: {exc}") from None
    for name, spec in cfg.profiles.items():
        if "path" in spec and not resolve_path(cfg, spec["path"]).is_file():
            raise InputError(f"{path}: $.profiles.{name}.path: file not found: {spec['path']}")
    if "path" in cfg.sessions and not resolve_path(cfg, cfg.sessions["path"]).is_file():
        raise InputError(f"{path}: $.sessions.path: file not found: {cfg.sessions['path']}")
    return cfg


def resolve_path(cfg: ScenarioConfig, p) -> Path:
    p = Path(p)
    return p if p.is_absolute() else Path(cfg.base_dir) / p


def output_dir(cfg: ScenarioConfig, cli_out: str | None = None) -> Path:
    """Output directory: command line, then environment, then config."""
    if cli_out:
        return Path(cli_out)
    if os.environ.get(OUT_ENV):
        return Path(os.environ[OUT_ENV])
    if cfg.output_dir:
        return resolve_path(cfg, cfg.output_dir)
    return Path(DEFAULT_OUT)


def load_profile(cfg: ScenarioConfig, name: str) -> np.ndarray:
    spec = cfg.profiles[name]
    unit = _UNITS[name]
    if "path" in spec:
        return load_timeseries_csv(resolve_path(cfg, spec["path"]), unit, cfg.grid).values.copy()
    if "values" in spec:
        try:
            return Timeseries(np.asarray(spec["values"], dtype=float), unit, cfg.grid).values.copy()
        except ValueError as exc:
            raise InputError(f"$.profiles.{name}.values: {exc}") from None
    try:
        return SYNTHETIC[spec["synthetic"]](cfg.grid, **spec.get("params", {}))
    except TypeError as exc:
        raise InputError(f"$.profiles.{name}.params: {exc}") from None


def load_profiles(cfg: ScenarioConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Day-ahead ``(price, baseload, solar)`` forecasts."""
    price, base, solar = (load_profile(cfg, n) for n in ("price", "baseload", "solar"))
    if np.any(solar < 0):
        raise InputError("$.profiles.solar: solar generation must be non-negative")
    return price, base, solar


def build_sessions(cfg: ScenarioConfig) -> tuple[list[ChargingSession], list[dict]]:
    if "path" in cfg.sessions:
        return read_sessions_csv(resolve_path(cfg, cfg.sessions["path"]), cfg.grid)
    return sample_sessions(cfg.behavior, cfg.sessions["n"], cfg.grid, cfg.seed), []


def build_scenario(cfg: ScenarioConfig, sessions: Sequence[ChargingSession],
                   price, baseload, solar) -> Scenario:
    planned = None
    if cfg.unplanned_ids:
        skip = set(cfg.unplanned_ids)
        planned = frozenset(s.id for s in sessions if s.id not in skip)
    return realize_scenario(cfg.grid, list(sessions), price, baseload, solar, cfg.perturbation, planned)


# -- run artifacts ---------------------------------------------------------------

def _write_json(path, obj) -> None:
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True, allow_nan=True)
        f.write("\n")


class RunWriter:
    """Collects the files of one run and finishes with a single manifest."""

    def __init__(self, directory):
        self.dir = Path(directory)
        try:
            self.dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise OSError(f"{self.dir}: cannot create output directory ({exc.strerror})") from None
        self.files: list[str] = []

    def path(self, name: str) -> Path:
        if name not in self.files:
            self.files.append(name)
        return self.dir / name

    def schedule(self, schedule: DayAheadSchedule) -> None:
        write_schedule_csv(self.path("dayahead_schedule.csv"), schedule.p_hat)
        _write_json(self.path("dayahead_summary.json"), schedule.summary())

    def sessions(self, sessions: Sequence[ChargingSession]) -> None:
        write_sessions_csv(self.path("sessions.csv"), sessions)

    def trace(self, trace: SimulationTrace) -> None:
        with open(self.path("trace.csv"), "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(TRACE_COLUMNS)
            for t in range(trace.grid.steps):
                w.writerow([t, fmt(trace.baseload[t]), fmt(trace.solar[t]), fmt(trace.ev_load[t]),
                            fmt(trace.target[t]), int(trace.iterations[t]), fmt(trace.residual[t]),
                            fmt(trace.p_hat[t]), fmt(trace.uncontrolled_ev[t])])
        self.per_ev(trace.ev_records)
        self.events(trace.events)

    def per_ev(self, records: Sequence[EVRecord]) -> None:
        with open(self.path("per_ev.csv"), "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(PER_EV_COLUMNS)
            for r in records:
                w.writerow([r.id, r.arrive, r.depart, fmt(r.delivered), fmt(r.required), fmt(r.shortfall_kwh)])

    def events(self, events: Sequence[dict], name: str = "events.jsonl") -> None:
        with open(self.path(name), "w") as f:
            for e in events:
                f.write(json.dumps(e, sort_keys=True) + "\n")

    def profiles(self, scenario: Scenario) -> None:
        g = scenario.grid
        with open(self.path("profiles.csv"), "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(PROFILE_COLUMNS)
            for t in range(g.steps):
                w.writerow([t, fmt(g.hours[t]), fmt(scenario.price[t]), fmt(scenario.baseload_forecast[t]),
                            fmt(scenario.solar_forecast[t]), fmt(scenario.baseload[t]), fmt(scenario.solar[t])])

    def report(self, report: MetricsReport | Sequence[MetricsReport]) -> None:
        if isinstance(report, MetricsReport):
            _write_json(self.path("report.json"), report.as_dict())
        else:
            _write_json(self.path("report.json"), [r.as_dict() for r in report])

    def json(self, name: str, obj) -> None:
        _write_json(self.path(name), obj)

    def text(self, name: str, text: str) -> None:
        with open(self.path(name), "w") as f:
            f.write(text)

    def finish(self, subcommand: str, *, config: dict | None = None, seed: int | None = None,
               inputs: dict[str, str] | None = None, overrides: dict | None = None,
               duration_s: float | None = None, status: str = "ok") -> dict:
        manifest = {
            "subcommand": subcommand,
            "status": status,
            "seed": seed,
            "config": config,
            "overrides": overrides or {},
            "inputs": {k: file_digest(v) for k, v in sorted((inputs or {}).items())},
            "outputs": {name: file_digest(self.dir / name) for name in sorted(self.files)},
            "versions": versions(),
        }
        if duration_s is not None:
            manifest["duration_s"] = duration_s
        _write_json(self.dir / "manifest.json", manifest)
        return manifest


def versions() -> dict:
    return {"evgrid": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "jsonschema": _jsonschema_version(), "python": platform.python_version()}


def _jsonschema_version() -> str:
    from importlib.metadata import PackageNotFoundError, version
    try:
        return version("jsonschema")
    except PackageNotFoundError:
        return "unknown"


def write_outputs(trace: SimulationTrace, schedule: DayAheadSchedule, report: MetricsReport,
                  directory, *, scenario: Scenario | None = None, config: dict | None = None,
                  seed: int | None = None, subcommand: str = "simulate") -> dict:
    """Write the standard artifact set of one simulated scenario and its manifest."""
    out = RunWriter(directory)
    out.schedule(schedule)
    out.trace(trace)
    if scenario is not None:
        out.profiles(scenario)
    out.report(report)
    return out.finish(subcommand, config=config, seed=seed)
