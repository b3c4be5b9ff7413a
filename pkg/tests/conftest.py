import os

import pytest
from hypothesis import HealthCheck, settings

import hiplace.placement as placement
from hiplace.harness import fixture_path, load_scenario

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# Every apply() calls placement.check_conservation when __debug__ is on; count
# the calls so the conservation criterion can report how many states it covered.
CONSERVATION_CHECKS = {"count": 0}
_original_check = placement.check_conservation


def _counting_check(state, tol=1e-9):
    CONSERVATION_CHECKS["count"] += 1
    _original_check(state, tol)


def pytest_configure(config):
    assert __debug__, "tests must run without -O: apply() only checks conservation in debug mode"
    placement.check_conservation = _counting_check


def pytest_unconfigure(config):
    placement.check_conservation = _original_check


@pytest.fixture(scope="session")
def tiny():
    return load_scenario(fixture_path("tiny"))


@pytest.fixture(scope="session")
def small():
    return load_scenario(fixture_path("small"))


# One line per acceptance criterion, printed after the run.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
