import numpy as np
import pytest

from ssflab.operators import Grid, Potential, build_free, build_perturbed
from ssflab.spectral import eigendecompose

ACCEPTANCE_LINES = []


def record_acceptance(number, passed, message):
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {message}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def gaussian_small():
    """Gaussian well V0 = -1 on [-20, 20] with 2000 interior points."""
    grid = Grid("line", 20.0, 2000)
    pot = Potential("gaussian", -1.0, 1.0)
    eH = eigendecompose(build_perturbed(grid, pot), vectors=False)
    eH0 = eigendecompose(build_free(grid), vectors=False)
    return grid, pot, eH, eH0


@pytest.fixture(scope="session")
def tiny_pair():
    """Small gaussian system with eigenvectors, for dense cross-checks."""
    grid = Grid("line", 6.0, 120)
    pot = Potential("gaussian", -1.5, 1.0)
    H, H0 = build_perturbed(grid, pot), build_free(grid)
    return grid, pot, H, H0, eigendecompose(H), eigendecompose(H0)


def rng(seed=0):
    return np.random.default_rng(seed)
