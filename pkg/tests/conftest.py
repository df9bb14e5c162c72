"""Shared fixtures: cached Euler-Lagrange solves and the slow-suite gate."""
import numpy as np
import pytest

from volterra_ghd.dos import RadialGrid, default_grid, solve_el
from volterra_ghd.ensembles import GgeParams
from volterra_ghd.ghd import DressingOperator, build_summary


def pytest_addoption(parser):
    parser.addoption(
        "--runslow", action="store_true", default=False,
        help="run slow-marked acceptance checks (hours of CPU)",
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="slow suite; pass --runslow to include")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


_SOLUTIONS = {}


def _solve(beta: float, m: int = 2000):
    """Session-wide cache of EL solutions keyed by (beta, m)."""
    key = (beta, m)
    if key not in _SOLUTIONS:
        # share one grid across betas so the kernel assembly is reused
        grid = RadialGrid(max(6.0, 4.0 * np.sqrt(beta)), m)
        _SOLUTIONS[key] = solve_el(GgeParams(beta), grid)
    return _SOLUTIONS[key]


@pytest.fixture(scope="session")
def solve_cached():
    return _solve


@pytest.fixture(scope="session")
def sol15():
    return _solve(1.5)


@pytest.fixture(scope="session")
def sol11():
    return _solve(1.1)


@pytest.fixture(scope="session")
def op15(sol15):
    return DressingOperator(sol15)


@pytest.fixture(scope="session")
def op11(sol11):
    return DressingOperator(sol11)


@pytest.fixture(scope="session")
def summary15(op15):
    return build_summary(op15)


@pytest.fixture(scope="session")
def summary11(op11):
    return build_summary(op11)
