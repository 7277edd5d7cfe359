"""
Shared fixtures: catalog fluxes, the four-corner configuration and small grids.
"""

import numpy as np
import pytest

from nonunique.construct import GridSpec
from nonunique.core.flux import get_flux
from nonunique.geometry import tartar_fixture


@pytest.fixture
def pm_flux():
    return get_flux("perona-malik", 1, 1)


@pytest.fixture
def identity_flux():
    return get_flux("identity", 1, 1)


@pytest.fixture
def tartar():
    return tartar_fixture()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def unit_grid_32():
    return GridSpec.cube(1, 32)


@pytest.fixture
def unit_grid_64():
    return GridSpec.cube(1, 64)
