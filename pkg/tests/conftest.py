import numpy as np
import pytest

from glare.lightfield import ImageBuffer


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def checker_image() -> ImageBuffer:
    """64x64 two-tone checker, handy wherever any valid image will do."""
    tile = np.kron([[1, 0] * 4, [0, 1] * 4] * 4, np.ones((8, 8)))
    arr = np.stack([0.2 + 0.6 * tile] * 3, axis=-1)
    return ImageBuffer(arr)


def random_image(rng: np.random.Generator, height: int = 32, width: int = 32) -> ImageBuffer:
    return ImageBuffer(rng.uniform(0.0, 1.0, size=(height, width, 3)))
