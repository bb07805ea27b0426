import numpy as np
import pytest

from rotorlab import RngStream, TimeGrid

SEED = 20261017

# filled by test_acceptance.py, printed at the end of the session
ACCEPTANCE_LINES = {}


@pytest.fixture
def seed():
    return SEED


@pytest.fixture
def stream():
    return RngStream(SEED, 0)


@pytest.fixture
def grid16():
    return TimeGrid(16)


@pytest.fixture
def rng():
    return np.random.default_rng(SEED)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
