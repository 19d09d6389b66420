import numpy as np
import pytest

from stokes_lsq.bench import SIDES_2D
from stokes_lsq.geometry import DomainSpec, box_domain, build_decomposition


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def unit_square():
    return build_decomposition(box_domain((0, 0), (1, 1), (1, 1), SIDES_2D))


@pytest.fixture
def four_squares():
    return build_decomposition(box_domain((-1, -1), (1, 1), (2, 2), SIDES_2D))


@pytest.fixture
def l_shape():
    blocks = (((-1.0, -1.0), (0.0, 0.0)), ((-1.0, 0.0), (0.0, 1.0)), ((0.0, 0.0), (1.0, 1.0)))
    return build_decomposition(DomainSpec(blocks, (), "boundary"))


@pytest.fixture
def unit_cube():
    return build_decomposition(box_domain((0, 0, 0), (1, 1, 1), (1, 1, 1), (), "boundary"))
