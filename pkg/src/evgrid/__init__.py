"""Two-stage predictive EV charging management for a community microgrid.

A day-ahead quadratic program commits an aggregate EV load profile; in real
time a receding-horizon consensus among the connected EVs tracks it.
"""

__version__ = "0.1.0"

from .allocation import (  # noqa: E402
    ConsensusOptions,
    ConsensusResult,
    ControlSignal,
    EVState,
    NoParticipantsError,
    PlanOptions,
    SimulationOptions,
    SimulationTrace,
    best_response_batch,
    control_signal,
    disaggregate,
    ev_best_response,
    run_consensus,
    simulate,
    uncontrolled_profile,
)
from .behavior import (  # noqa: E402
    BehaviorConfig,
    PerturbationConfig,
    StartComponent,
    perturb_profile,
    perturb_session,
    sample_sessions,
)
from .day_ahead import (  # noqa: E402
    DayAheadConvergenceError,
    DayAheadInput,
    DayAheadSchedule,
    SolverOptions,
    day_ahead_objective,
    solve_day_ahead,
)
from .flex_model import (  # noqa: E402
    AggregateEnvelope,
    ChargingSession,
    FlexEnvelope,
    SessionError,
    TimeGrid,
    aggregate_envelopes,
    aggregate_sessions,
    build_envelope,
    check_feasible,
    repair_session,
)
from .metrics import MetricsReport, ramp_index, ramp_reduction, total_cost, tracking_rmse  # noqa: E402
from .scenario import Scenario, realize_scenario  # noqa: E402
