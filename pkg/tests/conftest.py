import numpy as np
import pytest

from entroseg import RasterImage, build_lm_filterbank


@pytest.fixture(scope="session")
def lm_bank():
    """One shared filterbank; construction is cheap but not free."""
    return build_lm_filterbank()


@pytest.fixture
def rgb_image():
    rng = np.random.default_rng(42)
    return RasterImage(rng.random((24, 31, 3)))


@pytest.fixture
def gray_image():
    rng = np.random.default_rng(7)
    return RasterImage(rng.random((20, 26, 1)))
