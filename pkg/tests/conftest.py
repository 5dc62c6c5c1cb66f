import numpy as np
import pytest

from kinreduce import (
    CollisionModel,
    DistributionField,
    MomentState,
    SpatialMesh,
    maxwellian,
    truncated_rule,
)


@pytest.fixture(scope="session")
def grid():
    """Default ordinate grid for unit-variance states."""
    return truncated_rule(9.0, 64)


@pytest.fixture(scope="session")
def wide_grid():
    """Covers the sampling ranges u in [-1, 1], theta in [0.5, 1.5]."""
    return truncated_rule(10.8, 80)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def homogeneous_field(profile, grid, length=1.0):
    mesh = SpatialMesh(cells=1, length=length)
    return DistributionField(np.asarray(profile)[None, :], grid, mesh)


@pytest.fixture
def maxwell_field(grid):
    m = MomentState(rho=1.0, u=0.0, theta=1.0)
    return homogeneous_field(maxwellian(m, grid), grid)


@pytest.fixture
def bgk():
    return CollisionModel(kind="bgk", tau=0.5)
