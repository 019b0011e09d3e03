import numpy as np
import pytest

from gasedge import RngStream


@pytest.fixture
def rng():
    return RngStream(20240612)


@pytest.fixture
def gen():
    return np.random.default_rng(987654321)
