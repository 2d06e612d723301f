import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from kacprofile import _accel  # noqa: E402
from kacprofile.torus import TorusGrid, make_kernel, normalize_density, sample, uniform_density  # noqa: E402

BETA_FIG = 1.3


def cosine(u):
    return 1.0 + np.cos(2.0 * np.pi * u)


@pytest.fixture(scope="session")
def fig1():
    """Density, kernel and beta of the cosine-profile example on N = 512."""
    grid = TorusGrid(1, 512)
    J = make_kernel(grid, cosine)
    rho = normalize_density(grid.field(sample(grid, cosine)))
    return rho, BETA_FIG, J


@pytest.fixture(scope="session")
def flat():
    grid = TorusGrid(1, 128)
    return uniform_density(grid), make_kernel(grid, cosine)


@pytest.fixture(params=["numpy", "numba"])
def any_backend(request):
    if request.param == "numba" and not _accel.HAVE_NUMBA:
        pytest.skip("numba unavailable")
    with _accel.use_backend(request.param):
        yield request.param


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module is None or not module.REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(module.REPORT):
        terminalreporter.write_line(module.REPORT[number])
