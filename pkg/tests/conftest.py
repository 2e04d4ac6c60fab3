import numpy as np
import pytest

from addrate.eigenbasis import EigenSystem
from addrate.synthgen import GenConfig, generate


@pytest.fixture
def es():
    return EigenSystem(alpha=1.0, k_max=16)


@pytest.fixture
def small_ds():
    cfg = GenConfig(n=200, d=6, q=0.5, alpha=2.0, s_active=2, sigma=0.3, seed=3, k_max=8)
    return generate(cfg)


def assert_close(a, b, tol):
    assert np.all(np.abs(np.asarray(a) - np.asarray(b)) <= tol), (a, b)


# criterion lines collected by the acceptance tests, echoed after the run
ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_report():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
