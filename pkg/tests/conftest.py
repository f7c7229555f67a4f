import pytest

from mems_app.solvers.grid import Ball, Interval, build_grid
from mems_app.solvers.model import ForcingProfile, NonlinearityProfile


@pytest.fixture(scope="session")
def unit_interval():
    return build_grid(Interval(1.0), 400)


@pytest.fixture(scope="session")
def coarse_interval():
    return build_grid(Interval(1.0), 100)


@pytest.fixture(scope="session")
def unit_disk():
    return build_grid(Ball(2, 1.0), 400)


@pytest.fixture(scope="session")
def classic_gap():
    """g(s) = (1 − s)²."""
    return NonlinearityProfile("power", p=2.0)


@pytest.fixture(scope="session")
def uniform_forcing():
    return ForcingProfile("constant", amplitude=1.0)
