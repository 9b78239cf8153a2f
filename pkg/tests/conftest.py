import numpy as np
import pytest

from splitlab.paths import IncrementWindow


def W(*values, start=0):
    return IncrementWindow(start, tuple(values))


@pytest.fixture
def rng():
    return np.random.default_rng(20261017)


@pytest.fixture
def gaussian_block(rng):
    return rng.standard_normal((400, 8))
