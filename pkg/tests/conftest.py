import numpy as np
import pytest

from lwsw.energy import CouplingParams, Profile
from lwsw.grid import Grid

# two short waves in the existence regime; used across the suite
THEOREM_ALPHA = (-1.0, -0.5)
THEOREM_BETA = (-1.0, -0.5)

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _criteria[number] = (title, "PASS" if rep.passed else "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, verdict = _criteria[number]
        terminalreporter.write_line(f"criterion {number:2d}: {verdict}  {title}")


def theorem_params(lam=8.0, d=1.0):
    return CouplingParams(THEOREM_ALPHA, THEOREM_BETA, d, lam)


def sech(x):
    return 1.0 / np.cosh(x)


def nls_profile(grid, N=1):
    """``sqrt(2) sech(x)`` in the first short wave, nothing else."""
    u = np.zeros((N, grid.M))
    u[0] = np.sqrt(2.0) * sech(grid.x)
    return Profile(grid, u, np.zeros(grid.M))


def kdv_profile(grid, N=1, speed=1.0):
    """``3c sech^2(sqrt(c) x / 2)`` in the long wave."""
    v = 3.0 * speed * sech(np.sqrt(speed) * grid.x / 2.0) ** 2
    return Profile(grid, np.zeros((N, grid.M)), v)


def random_profile(grid, N, rng, width=2.0):
    """Smooth, decayed, sign-changing fields."""
    x = grid.x
    u = np.empty((N + 1, grid.M))
    for j in range(N + 1):
        c, w = rng.uniform(-3, 3), width * rng.uniform(0.6, 1.4)
        k, ph = rng.uniform(0, 2), rng.uniform(0, 2 * np.pi)
        u[j] = rng.uniform(0.5, 1.5) * np.exp(-((x - c) / w) ** 2) * np.cos(k * x + ph)
    return Profile.from_stacked(grid, u)


@pytest.fixture
def grid40():
    return Grid(40.0, 1024)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
