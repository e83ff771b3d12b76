"""Command-line entry point.

Subcommands::

    evgrid gen       --config s.json           -> sessions.csv, gen_provenance.json
    evgrid dayahead  --config s.json           -> dayahead_schedule.csv, dayahead_summary.json
    evgrid simulate  --config s.json --schedule dayahead_schedule.csv
                                               -> trace.csv, per_ev.csv, events.jsonl, profiles.csv
    evgrid report    RUN_DIR [RUN_DIR ...]     -> report.json, table.txt, table.csv
    evgrid pipeline  --config s.json           -> all of the above in one directory

Exit status: 0 on success, 1 on invalid input or usage, 2 when the
day-ahead solver does not converge (artifacts are still written).
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from pathlib import Path
from typing import Sequence

import numpy as np

from .allocation import simulate as run_simulation
from .day_ahead import DayAheadConvergenceError, DayAheadInput, DayAheadSchedule, solve_day_ahead
from .flex_model import TimeGrid, aggregate_sessions
from .metrics import MetricsReport, build_report, format_table, report_from_trace, table_rows
from .scenario_io import (
    InputError,
    RunWriter,
    ScenarioConfig,
    build_scenario,
    build_sessions,
    config_from_dict,
    load_profiles,
    load_timeseries_csv,
    output_dir,
    parse_scenario,
    read_per_ev_csv,
    read_profiles_csv,
    read_schedule_csv,
    read_sessions_csv,
    read_trace_csv,
    resolve_path,
    write_envelope_csv,
)

log = logging.getLogger("evgrid")

EXIT_OK, EXIT_INVALID, EXIT_NONCONVERGED = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with status 1 instead of argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _common(p: argparse.ArgumentParser, scenario: bool = True) -> None:
    p.add_argument("--out", metavar="DIR", help="output directory (overrides $EVGRID_OUT and the config)")
    p.add_argument("--timing", action="store_true", help="record wall-clock duration in the manifest")
    p.add_argument("-v", "--verbose", action="store_true")
    if not scenario:
        return
    p.add_argument("--config", metavar="PATH", help="scenario JSON (defaults apply when omitted)")
    p.add_argument("--seed", type=int, metavar="INT")
    p.add_argument("--theta", type=float, metavar="FLOAT", help="ramp penalty weight")
    p.add_argument("--beta", type=float, metavar="FLOAT", help="consensus damping")
    p.add_argument("--evs", type=int, metavar="INT", help="number of generated sessions")
    p.add_argument("--perfect-forecast", type=_bool, metavar="BOOL", dest="perfect_forecast")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="evgrid", description="Predictive EV charging management for a community microgrid.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="generate a sessions CSV")
    _common(p)

    p = sub.add_parser("dayahead", help="solve the day-ahead schedule")
    _common(p)
    p.add_argument("--sessions", metavar="CSV", help="sessions file (overrides the config)")
    for name in ("price", "baseload", "solar"):
        p.add_argument(f"--{name}", metavar="CSV", help=f"{name} series (overrides the config)")

    p = sub.add_parser("simulate", help="run the real-time receding-horizon allocation")
    _common(p)
    p.add_argument("--schedule", metavar="CSV", help="day-ahead schedule (step,p_hat_kw); required")
    p.add_argument("--sessions", metavar="CSV", help="sessions file (overrides the config)")

    p = sub.add_parser("report", help="tabulate metrics over one or more run directories")
    _common(p, scenario=False)
    p.add_argument("runs", nargs="+", metavar="RUN_DIR")
    p.add_argument("--price", metavar="CSV", help="price series; defaults to each run's profiles.csv")
    p.add_argument("--step-hours", type=float, default=None, metavar="FLOAT",
                   help="grid step when a run has no profiles.csv (default 0.25)")
    p.add_argument("--labels", nargs="+", metavar="LABEL", help="column labels, one per run")

    p = sub.add_parser("pipeline", help="gen, dayahead, simulate and report in one run")
    _common(p)
    return parser


# -- helpers ---------------------------------------------------------------------

class _Run:
    """Resolved config plus bookkeeping shared by the scenario subcommands."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.t0 = time.perf_counter()
        self.inputs: dict[str, Path] = {}
        if args.config:
            cfg = parse_scenario(args.config)
            self.inputs["config"] = Path(args.config)
        else:
            cfg = config_from_dict({})
        self.overrides = {k: getattr(args, k) for k in ("seed", "theta", "beta", "evs", "perfect_forecast", "out")
                          if getattr(args, k, None) is not None}
        self.cfg: ScenarioConfig = cfg.with_overrides(
            seed=args.seed, theta=args.theta, beta=args.beta, evs=args.evs,
            perfect_forecast=args.perfect_forecast)
        for name, spec in self.cfg.profiles.items():
            if "path" in spec:
                self.inputs[name] = resolve_path(self.cfg, spec["path"])
        if "path" in self.cfg.sessions:
            self.inputs["sessions"] = resolve_path(self.cfg, self.cfg.sessions["path"])
        self.out = RunWriter(output_dir(self.cfg, args.out))
        self.status = "ok"

    def sessions(self):
        path = getattr(self.args, "sessions", None)
        if path:
            self.inputs["sessions"] = Path(path)
            return read_sessions_csv(path, self.cfg.grid)
        return build_sessions(self.cfg)

    def profiles(self):
        price, base, solar = load_profiles(self.cfg)
        series = {"price": price, "baseload": base, "solar": solar}
        for name, unit in (("price", "USD/kWh"), ("baseload", "kW"), ("solar", "kW")):
            path = getattr(self.args, name, None)
            if path:
                self.inputs[name] = Path(path)
                series[name] = load_timeseries_csv(path, unit, self.cfg.grid).values.copy()
        if np.any(series["solar"] < 0):
            raise InputError("solar generation must be non-negative")
        return series["price"], series["baseload"], series["solar"]

    def finish(self, subcommand: str) -> dict:
        return self.out.finish(
            subcommand, config=self.cfg.resolved(), seed=self.cfg.seed,
            inputs={k: str(v) for k, v in self.inputs.items()}, overrides=self.overrides,
            duration_s=round(time.perf_counter() - self.t0, 3) if self.args.timing else None,
            status=self.status)


def _dayahead(run: _Run, sessions, price, base, solar) -> tuple[DayAheadSchedule, bool]:
    cfg = run.cfg
    agg = aggregate_sessions(sessions, cfg.grid)
    inp = DayAheadInput(price, base, solar, cfg.theta, cfg.grid)
    try:
        schedule, ok = solve_day_ahead(inp, agg, cfg.solver), True
    except DayAheadConvergenceError as exc:
        log.error("%s", exc)
        schedule, ok = exc.best, False
        run.status = "dayahead_nonconverged"
    run.out.schedule(schedule)
    write_envelope_csv(run.out.path("envelope.csv"), agg)
    return schedule, ok


def _gen_outputs(run: _Run, sessions) -> None:
    run.out.sessions(sessions)
    run.out.json("gen_provenance.json", {
        "n": len(sessions), "seed": run.cfg.seed, "grid": run.cfg.resolved()["grid"],
        "behavior": run.cfg.behavior.as_dict(),
    })


# -- subcommands -----------------------------------------------------------------

def cmd_gen(args) -> int:
    run = _Run(args)
    if "n" not in run.cfg.sessions:
        raise InputError("gen needs a session generator config, but $.sessions names a file")
    sessions, _ = build_sessions(run.cfg)
    _gen_outputs(run, sessions)
    run.finish("gen")
    return EXIT_OK


def cmd_dayahead(args) -> int:
    run = _Run(args)
    sessions, repairs = run.sessions()
    price, base, solar = run.profiles()
    _, ok = _dayahead(run, sessions, price, base, solar)
    if repairs:
        run.out.events(repairs)
    run.finish("dayahead")
    return EXIT_OK if ok else EXIT_NONCONVERGED


def cmd_simulate(args) -> int:
    if not args.schedule:
        raise InputError("simulate needs a day-ahead schedule: pass --schedule dayahead_schedule.csv")
    run = _Run(args)
    p_hat = read_schedule_csv(args.schedule, run.cfg.grid)
    run.inputs["schedule"] = Path(args.schedule)
    sessions, repairs = run.sessions()
    price, base, solar = run.profiles()
    scenario = build_scenario(run.cfg, sessions, price, base, solar)
    trace = run_simulation(scenario, p_hat, run.cfg.simulation_options())
    trace.events[:0] = repairs
    run.out.trace(trace)
    run.out.profiles(scenario)
    run.finish("simulate")
    return EXIT_OK


def run_report(run_dir, price_csv=None, step_hours=None, label: str | None = None) -> MetricsReport:
    """Metrics for a finished run directory (``trace.csv``, ``per_ev.csv``)."""
    run_dir = Path(run_dir)
    trace = read_trace_csv(run_dir / "trace.csv")
    per_ev = read_per_ev_csv(run_dir / "per_ev.csv") if (run_dir / "per_ev.csv").is_file() else None
    steps = trace["step"].size
    profiles = read_profiles_csv(run_dir / "profiles.csv") if (run_dir / "profiles.csv").is_file() else None
    if step_hours is None:
        step_hours = float(profiles["hour"][1] - profiles["hour"][0]) if profiles and steps > 1 else 0.25
    if price_csv is not None:
        price = load_timeseries_csv(price_csv, "USD/kWh", TimeGrid(steps, step_hours)).values
    elif profiles is not None:
        price = profiles["price_usd_per_kwh"]
    else:
        raise InputError(f"{run_dir}: no profiles.csv; pass --price")
    shortfalls = per_ev["shortfall"] if per_ev is not None else np.zeros(0)
    return build_report(
        baseload=trace["baseload_kw"], solar=trace["solar_kw"], ev_load=trace["ev_kw"],
        uncontrolled_ev=trace["uncontrolled_ev_kw"], p_hat=trace["p_hat_kw"], price=price,
        dt=step_hours, shortfalls=shortfalls, label=label or f"{len(shortfalls)} EVs",
    )


def _write_tables(out: RunWriter, reports: Sequence[MetricsReport]) -> None:
    out.report(list(reports))
    out.text("table.txt", format_table(reports))
    with open(out.path("table.csv"), "w", newline="") as f:
        csv.writer(f, lineterminator="\n").writerows(table_rows(reports))


def cmd_report(args) -> int:
    t0 = time.perf_counter()
    if args.labels and len(args.labels) != len(args.runs):
        raise InputError(f"--labels has {len(args.labels)} entries for {len(args.runs)} runs")
    labels = args.labels or [None] * len(args.runs)
    inputs = {}
    for i, d in enumerate(args.runs):
        if not (Path(d) / "trace.csv").is_file():
            raise InputError(f"{d}: trace.csv not found")
        inputs[f"run{i}.trace"] = str(Path(d) / "trace.csv")
    if args.price:
        inputs["price"] = args.price
    reports = [run_report(d, args.price, args.step_hours, lab) for d, lab in zip(args.runs, labels)]
    out = RunWriter(args.out or output_dir(config_from_dict({})))
    _write_tables(out, reports)
    sys.stdout.write(format_table(reports))
    out.finish("report", inputs=inputs, overrides={"runs": list(args.runs)},
               duration_s=round(time.perf_counter() - t0, 3) if args.timing else None)
    return EXIT_OK


def cmd_pipeline(args) -> int:
    run = _Run(args)
    sessions, repairs = build_sessions(run.cfg)
    if "n" in run.cfg.sessions:
        _gen_outputs(run, sessions)
    price, base, solar = run.profiles()
    schedule, ok = _dayahead(run, sessions, price, base, solar)
    scenario = build_scenario(run.cfg, sessions, price, base, solar)
    trace = run_simulation(scenario, schedule, run.cfg.simulation_options())
    trace.events[:0] = repairs
    run.out.trace(trace)
    run.out.profiles(scenario)
    report = report_from_trace(trace, price, label=f"{len(sessions)} EVs")
    _write_tables(run.out, [report])
    run.finish("pipeline")
    return EXIT_OK if ok else EXIT_NONCONVERGED


COMMANDS = {"gen": cmd_gen, "dayahead": cmd_dayahead, "simulate": cmd_simulate,
            "report": cmd_report, "pipeline": cmd_pipeline}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (InputError, ValueError) as exc:
        print(f"evgrid {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"evgrid {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
