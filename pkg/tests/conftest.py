import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
import hypothesis.strategies as st

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

from aggregation1d import GridSpec, preset  # noqa: E402


@pytest.fixture(scope="session")
def ex1():
    return preset("ex1")


@pytest.fixture(scope="session")
def presets():
    return {name: preset(name) for name in ("ex1", "ex2", "ex3", "ex4", "ex5", "ex6")}


@st.composite
def monotone_states(draw, c0=2.0, min_cells=6, max_cells=40):
    """A nondecreasing V from 0 to c0 on a small grid, plus the grid."""
    J = draw(st.integers(min_cells, max_cells))
    w = draw(st.lists(st.floats(0.0, 1.0), min_size=J, max_size=J))
    w = np.array(w)
    # boundary cells empty, as the window guard guarantees
    w[0] = w[-1] = 0.0
    if w.sum() == 0:
        w[J // 2] = 1.0
    dx = draw(st.sampled_from([0.01, 0.02, 0.05]))
    V = np.concatenate([[0.0], np.cumsum(w / w.sum() * c0)])
    V[-1] = c0
    return V, GridSpec(dx, 0.0, J * dx)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """Record one PASS/FAIL line for the terminal summary."""

    def record(number, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
