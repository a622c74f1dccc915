import numpy as np
import pytest

from g2flow import grid as gridmod


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def line_grid():
    return gridmod.Grid(32, (0,))
