import numpy as np
import pytest

from hte_vim.model import Dataset


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def linear_data(rng):
    """Y = 2A + W1 exactly; A independent of W."""
    n = 60
    W = rng.uniform(-1, 1, size=(n, 2))
    A = (np.arange(n) % 2).astype(float)
    return Dataset(W, A, 2 * A + W[:, 0])


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
