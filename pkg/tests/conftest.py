import math

import pytest

from delaygeom.model import NetworkParams

# lines reported by the acceptance suite, printed at the end of the session
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def unit_params():
    """Noiseless network with lambda_mt = lambda_bs, so L is about 0.5851."""
    return NetworkParams(1.0, 1.0, K=1.0, P=1.0, W=0.0)


@pytest.fixture
def full_load_params():
    """Noiseless network with L = 1 to double precision."""
    p = NetworkParams(1.0, 1e9, K=1.0, P=1.0, W=0.0)
    assert math.isclose(p.load, 1.0, rel_tol=1e-15)
    return p


@pytest.fixture
def reference_params():
    return NetworkParams.reference()
