import numpy as np
import pytest

from stochscl import models
from stochscl.core import build_grid


@pytest.fixture(autouse=True)
def _clean_registry():
    yield
    models.reset_registry()


@pytest.fixture
def grid64():
    return build_grid(-1.0, 1.0, 64)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
