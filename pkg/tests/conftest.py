import sys
from pathlib import Path

import numpy as np
import pytest

from egoctl import _accel

sys.path.insert(0, str(Path(__file__).parent))

BACKENDS = ["numpy"] + (["numba"] if _accel.NUMBA_AVAILABLE else [])

# lines recorded by test_acceptance, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(params=BACKENDS)
def backend(request):
    prev = _accel.set_backend(request.param)
    yield request.param
    _accel.set_backend(prev)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
