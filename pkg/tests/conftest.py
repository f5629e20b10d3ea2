import numpy as np
import pytest

from dfnflow.experiments import make_test1, make_test2
from dfnflow.geometry import DIRICHLET0, NEUMANN0, Fracture
from dfnflow.saddle import discretize

X = np.array([1.0, 0.0, 0.0])
Y = np.array([0.0, 1.0, 0.0])
Z = np.array([0.0, 0.0, 1.0])


def rect(u0, u1, v0, v1):
    return [(u0, v0), (u1, v0), (u1, v1), (u0, v1)]


def unit_square(bc=None, fid=1):
    return Fracture(fid, np.zeros(3), [X, Y], rect(0, 1, 0, 1), np.eye(2), bc or (DIRICHLET0,) * 4)


@pytest.fixture(scope="session")
def test1():
    return make_test1()


@pytest.fixture(scope="session")
def test2a():
    return make_test2("A")


@pytest.fixture(scope="session")
def test2b():
    return make_test2("B")


@pytest.fixture(scope="session")
def disc1_coarse(test1):
    return discretize(test1.network, 0.22, test1.forcing, 1.0, 0.15, True)


@pytest.fixture(scope="session")
def disc1_fine(test1):
    return discretize(test1.network, 0.1, test1.forcing, 1.0, 0.15, True)


def pytest_terminal_summary(terminalreporter):
    from oracles import ACCEPTANCE
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
