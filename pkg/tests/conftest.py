import numpy as np
import pytest

from artifact.numerics import RngStream


@pytest.fixture
def rng():
    return RngStream(1234)


@pytest.fixture
def gen():
    return np.random.default_rng(7)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
