import numpy as np
import pytest
from hypothesis import settings

from conformable import FractionalOrder, fundamental_matrix, natural_grid

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")

HALF = FractionalOrder(0.5)
SADDLE = np.diag([-1.0, 1.0])
P_STABLE = np.diag([1.0, 0.0])


@pytest.fixture(scope="session")
def half():
    return HALF


@pytest.fixture(scope="session")
def saddle_X():
    """Principal fundamental matrix of diag(-1, 1) on clock time [0, 8]."""
    return fundamental_matrix(HALF, SADDLE, natural_grid(HALF, 0.0, HALF.time(8.0), 81))


@pytest.fixture(scope="session")
def saddle_X_long():
    """Same system on clock time [0, 24] with 40 nodes per clock unit (fixed-point grids)."""
    return fundamental_matrix(HALF, SADDLE, natural_grid(HALF, 0.0, HALF.time(24.0), 961))


#: ``(criterion, passed, detail)`` lines recorded by the acceptance suite
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
