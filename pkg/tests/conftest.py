import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture
def grid4():
    from mhbhm.grids import SpatialGrid

    return SpatialGrid(4, 4)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
