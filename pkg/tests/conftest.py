"""Shared fixtures: the sensor-array recovery setup used across test modules.

The acceptance tests append one summary line per criterion; the terminal
hook below prints them after the run so the pass/fail record is visible in
plain ``pytest -v`` output.
"""
import time

import numpy as np
import pytest

import momentropy as mp
from momentropy import problems as pr

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    return _ACCEPTANCE_LINES.append


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def array_problem():
    """Three-sensor array operator with the documented two-bump truth density."""
    op = pr.nonequispaced_array_problem()
    rho_true = pr.two_bump_demo_density(op.grid)
    moment = mp.apply_L(op, rho_true)
    return op, rho_true, moment


@pytest.fixture(scope="session")
def array_solves(array_problem):
    """Timed recovery runs on the array problem, one per density family."""
    op, _rho_true, moment = array_problem
    out = {}
    for name in ("rational", "exponential"):
        family = mp.family_from_name(name)
        start = mp.default_dual_start(op, family)
        t0 = time.perf_counter()
        report = mp.solve(op, moment, family, start=start)
        out[name] = (report, time.perf_counter() - t0)
    return out


@pytest.fixture()
def rng():
    return np.random.default_rng(20260823)
