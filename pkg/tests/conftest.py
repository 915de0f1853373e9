import math

import numpy as np
import pytest
from hypothesis import settings

from utilityforge import distributions as dist
from utilityforge.market import BsParams, bs_kernel

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

MU, SIGMA, R, T = 0.08, 0.2, 0.03, 1.0
THETA = (MU - R) / SIGMA


@pytest.fixture(scope="session")
def params():
    return BsParams(MU, SIGMA, R, T)


@pytest.fixture(scope="session")
def kernel(params):
    return bs_kernel(params)


def catalog_laws():
    """Targets used across modules: name -> law."""
    return {
        "normal": dist.Normal(1.0, 0.3),
        "lognormal": dist.LogNormal(0.05, 0.2),
        "exponential": dist.Exponential(1.0),
        "pareto": dist.Pareto(1.0, 3.0),
    }


@pytest.fixture(scope="session")
def catalog():
    return catalog_laws()


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def discount():
    return math.exp(-R * T)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
