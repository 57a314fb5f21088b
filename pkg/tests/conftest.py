import numpy as np
import pytest

from depthfill.raster import DisparityRaster


def random_raster(rng, shape=(8, 8), zero_prob=0.3, high=65536):
    codes = rng.integers(1, high, size=shape)
    codes[rng.random(shape) < zero_prob] = 0
    return DisparityRaster(codes)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
