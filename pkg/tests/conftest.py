import numpy as np
import pytest
from hypothesis import settings

from rescon.dynamics import AgentDynamics, GainDesign
from rescon.graph import canonical_graph

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture
def graph():
    return canonical_graph()


@pytest.fixture
def oscillator():
    return AgentDynamics([[0.0, -1.0], [1.0, 0.0]], [1.0, 0.0])


@pytest.fixture
def gains():
    return GainDesign([[1.35219345, 0.41421356]], 0.6)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULT_LINES

    if RESULT_LINES:
        terminalreporter.section("acceptance criteria")
        for line in RESULT_LINES:
            terminalreporter.write_line(line)
