import numpy as np
import pytest

from hpicone.hcalc import HGrid


@pytest.fixture(scope="session")
def grid9():
    return HGrid.box(9)


@pytest.fixture(scope="session")
def grid17():
    return HGrid.box(17)


@pytest.fixture
def rng():
    return np.random.default_rng(20260101)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[n])
