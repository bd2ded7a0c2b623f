import numpy as np
import pytest

from qcurv.manifold import QUOTIENT, SPHERE, make_model
from qcurv.operators import gjms_constants


@pytest.fixture(scope="session")
def s5():
    return make_model(SPHERE, 5)


@pytest.fixture(scope="session")
def s7():
    return make_model(SPHERE, 7)


@pytest.fixture(scope="session")
def q5():
    return make_model(QUOTIENT, 5)


@pytest.fixture(scope="session")
def c51():
    return gjms_constants(5, 1)


@pytest.fixture(scope="session")
def c72():
    return gjms_constants(7, 2)


@pytest.fixture(scope="session")
def e1():
    v = np.zeros(6)
    v[0] = 1.0
    return v


def pytest_terminal_summary(terminalreporter):
    from _acceptance_report import LINES
    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
