import pytest

from absde_lab.engine import RegressionCache, TimeGrid, simulate


@pytest.fixture(scope="session")
def ensemble_1d():
    """10^4 paths on [0, 1.5] with h = 0.01, seed 1."""
    return simulate(1, 10_000, TimeGrid.from_horizon(1.0, 0.5, 0.01))


@pytest.fixture(scope="session")
def cache_1d(ensemble_1d):
    return RegressionCache(ensemble_1d, 3)


@pytest.fixture(scope="session")
def small_ensemble():
    return simulate(7, 2000, TimeGrid.from_horizon(1.0, 0.5, 0.05))
