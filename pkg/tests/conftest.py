import numpy as np
import pytest

from nestedkmeans.core import Dataset
from nestedkmeans.kernels import available

ACCEPTANCE_LINES = []


@pytest.fixture(params=available())
def backend(request):
    return request.param


@pytest.fixture
def four_points():
    return Dataset(np.array([[0.0], [1.0], [10.0], [11.0]]))


@pytest.fixture
def rng():
    return np.random.default_rng(20160523)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
