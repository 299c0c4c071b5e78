import os
import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from blockalt.cli import load_problem

ROOT = Path(__file__).resolve().parent.parent
PROBLEMS = ROOT / "problems"
sys.path.insert(0, str(Path(__file__).resolve().parent))

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# Reference optimum of the three-variable benchmark, frozen from
# oracles.eq12_reference() (200-point grid + active-set Brent refinement,
# SLSQP agreeing to 1e-9).
EQ12_OPT_POINT = (2.442880113541745, 2.557119886458255, 0.8187057518350145)
EQ12_OPT_COST = 6.065381948670088

# Fixed a priori for every seeded run of the benchmark.
SEED = 7


@pytest.fixture(scope="session")
def eq12():
    return load_problem(PROBLEMS / "eq12.prob")


@pytest.fixture(scope="session")
def fig1():
    return load_problem(PROBLEMS / "fig1.prob")


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[num])
