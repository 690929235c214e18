import numpy as np
import pytest

from _helpers import K_DEFAULT


@pytest.fixture
def k():
    return K_DEFAULT


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if not test_acceptance.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, 9):
        line = test_acceptance.RESULTS.get(n, f"criterion {n} [FAIL] did not complete")
        terminalreporter.write_line(line)
