import numpy as np
import pytest

from haarlab.grid import GridSpec, StepFunction
from haarlab.weights import Weight


def random_step(grid, seed, positive=False):
    rng = np.random.default_rng(seed)
    if positive:
        return StepFunction(grid, np.exp(rng.normal(0, 1.5, grid.n_cells)))
    return StepFunction(grid, rng.standard_normal(grid.n_cells))


@pytest.fixture
def w41():
    """d=1, L=1, w = [4, 1]: the hand-arithmetic weight."""
    return Weight(StepFunction(GridSpec(1, 1), np.array([4.0, 1.0])), weight_id="w41")


@pytest.fixture(params=[(1, 4), (2, 3), (3, 2)], ids=lambda p: f"d{p[0]}L{p[1]}")
def small_grid(request):
    return GridSpec(*request.param)


# one PASS/FAIL line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = {}


def record_criterion(number: int, passed: bool, detail: str):
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
