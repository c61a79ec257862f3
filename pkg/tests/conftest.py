import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from tvpa.experiments import make_section4_design
from tvpa.process import Trace, simulate_chain

settings.register_profile("tvpa", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("tvpa")

# filled by test_acceptance; printed at the end of the session
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])


@pytest.fixture(scope="session")
def design7500():
    return make_section4_design(7500)


@pytest.fixture(scope="session")
def trace7500(design7500):
    ps, ss = design7500
    return simulate_chain(ps, ss, seed=11)


def vertex_bits(y_steps):
    """Full ``bits`` array (leading zero) for the step indicators ``y_1..y_n``."""
    return np.concatenate([[0], np.asarray(y_steps, dtype=np.int64)])


def make_trace(y_steps, x):
    """Trace from step indicators and a leaf-count path (``x[0]`` included)."""
    y = vertex_bits(y_steps)
    return Trace(y, 1 + np.cumsum(y), np.asarray(x))
