import numpy as np
import pytest

from vbgpcm import generate_sim1, generate_sim2


@pytest.fixture(scope="session")
def sim1():
    return generate_sim1(0)


@pytest.fixture(scope="session")
def sim2():
    return generate_sim2(0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
