import numpy as np
import pytest


def ginibre(rng, n):
    return (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2 * n)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def jordan_like():
    return np.array([[0, 1], [0, 1]], dtype=complex)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[number])
