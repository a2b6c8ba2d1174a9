import numpy as np
import pytest

from dualscore.field import RadianceField
from dualscore.scene import make_sphere_scene


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_field(rng):
    """4^3 x 2 grid, width-8 MLP: small enough for full finite differences."""
    fld = RadianceField.create(rng, grid_res=4, feat_dim=2, hidden=8)
    # randomize the zero-initialized output layer so gradients reach
    # every parameter
    W2, b2 = fld.layers[-1]
    fld.layers[-1] = (rng.uniform(-0.4, 0.4, W2.shape), b2)
    return fld


@pytest.fixture
def sphere_scene():
    return make_sphere_scene()
