import pytest
from hypothesis import HealthCheck, settings

from linkshadow.catalog import load_catalog
from linkshadow.covariance import ShadowingParams
from linkshadow.geometry import PathLossParams, grid_deployment
from linkshadow.sampler import build_joint_covariance

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

DELTA = 0.21
RATIO = 0.29
SIGMA_DB = 5.0


@pytest.fixture(scope="session")
def grid():
    return grid_deployment()


@pytest.fixture(scope="session")
def sp():
    return ShadowingParams.from_ratio(DELTA, RATIO, SIGMA_DB**2)


@pytest.fixture(scope="session")
def path_loss():
    return PathLossParams(-40.0, 2.5, 1.0, SIGMA_DB)


@pytest.fixture(scope="session")
def catalog():
    return load_catalog()


@pytest.fixture(scope="session")
def grid_fc(grid, sp):
    """Joint covariance of the 4x4 grid with shadow/non-shadow parts split."""
    return build_joint_covariance(grid, sp, components=True)
