import numpy as np
import pytest

from diffcorr.core import FeatureMap, ImageRef


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def textured_image(rng):
    """A 32x32 image with rich random texture."""
    return ImageRef("textured", rng.random((32, 32, 3)))


def random_feature_map(rng, c=16, h=8, w=8, src_h=32, src_w=32) -> FeatureMap:
    return FeatureMap(rng.standard_normal((c, h, w)), src_h, src_w)
