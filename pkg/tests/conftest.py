import numpy as np
import pytest

import oracles
from levybarrier import model_from_dict, scale_function

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def m1():
    return model_from_dict(oracles.m1())


@pytest.fixture(scope="session")
def two_term():
    return model_from_dict(oracles.two_term())


@pytest.fixture(scope="session")
def two_sided():
    return model_from_dict(oracles.two_sided())


@pytest.fixture(scope="session")
def m1_sf(m1):
    return scale_function(m1)


@pytest.fixture(scope="session")
def two_term_sf(two_term):
    return scale_function(two_term)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
