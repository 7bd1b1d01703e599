import numpy as np
import pytest

from infgmres.problems import build_delay, build_helmholtz1d


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def delay100():
    return build_delay(100, seed=0)


@pytest.fixture(scope="session")
def helmholtz200():
    return build_helmholtz1d(200)
