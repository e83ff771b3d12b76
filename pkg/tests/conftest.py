import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from evgrid.flex_model import ChargingSession, TimeGrid

settings.register_profile("evgrid", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("evgrid")

# criterion number -> (passed, detail); filled by the acceptance tests
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def grid():
    return TimeGrid(8, 1.0)


@pytest.fixture
def quarter_grid():
    return TimeGrid(96, 0.25)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def two_sessions():
    return [
        ChargingSession(id=0, t_start=1, duration=4, e_req=10.0, p_max=4.0),
        ChargingSession(id=1, t_start=3, duration=5, e_req=6.0, p_max=3.0),
    ]


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
