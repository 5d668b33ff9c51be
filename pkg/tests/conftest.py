import numpy as np
import pytest

from surftopt.fem import ProblemCoefficients
from surftopt.mesh import build_icosphere


@pytest.fixture(scope="session")
def ico():
    cache = {}

    def get(level):
        if level not in cache:
            cache[level] = build_icosphere(level)
        return cache[level]

    return get


@pytest.fixture(scope="session")
def earth():
    return ProblemCoefficients.land_water()


@pytest.fixture(scope="session")
def moderate():
    return ProblemCoefficients(beta1=2.0, beta2=1.0, gamma1=1.0, gamma2=1.0, f1=1.0, f2=0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20241016)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
