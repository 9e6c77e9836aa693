import numpy as np
import pytest

from dgff_glauber import build_box, greens_matrix


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(key=20260810))


@pytest.fixture(scope="session")
def box4():
    return build_box(4)


@pytest.fixture(scope="session")
def box8():
    return build_box(8)


@pytest.fixture(scope="session")
def greens8():
    return greens_matrix(8)
