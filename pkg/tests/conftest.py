import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from collisionlab.mass_geometry import MassSystem

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_system(rng, n, d, low=0.5, high=3.0) -> MassSystem:
    return MassSystem(tuple(rng.uniform(low, high, n)), d)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# One line per acceptance criterion, filled in by test_acceptance.py and
# echoed in the terminal summary so that it survives output capturing.
ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
