import numpy as np
import pytest

from qvoter.lattice import NN6_OFFSETS, E3_OFFSETS, build_torus


@pytest.fixture(scope="session")
def lat4():
    return build_torus(4, NN6_OFFSETS)


@pytest.fixture(scope="session")
def lat8():
    return build_torus(8, NN6_OFFSETS)


@pytest.fixture(scope="session")
def lat3():
    return build_torus(3, NN6_OFFSETS)


@pytest.fixture(scope="session")
def lat4_e3():
    return build_torus(4, E3_OFFSETS)


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
