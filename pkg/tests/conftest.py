import numpy as np
import pytest

from su2statics.grid import GridSpec, build_grid
from su2statics.minimizer import minimize

# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES: list = []


@pytest.fixture(scope="session")
def grid():
    return build_grid(GridSpec())


@pytest.fixture(scope="session")
def small_grid():
    return build_grid(GridSpec(r_max=32, n_r_in=12, n_r_out=48, n_theta=16))


@pytest.fixture(scope="session")
def coarse_grid():
    # 64 radial by 16 polar cells
    return build_grid(GridSpec(r_max=128, n_r_in=8, n_r_out=56, n_theta=16))


@pytest.fixture(scope="session")
def solve(grid):
    """Cached minimiser on the default grid, seeded by the Hessian direction."""
    cache = {}

    def get(g):
        g = float(g)
        if g not in cache:
            cache[g] = minimize(g, grid)
        return cache[g]

    return get


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
