import numpy as np
import pytest

from eitpad.mesh import build_mesh, uniform_field
from eitpad.protocol import generate_adjacent_protocol


@pytest.fixture(scope="session")
def small_mesh():
    """Fast 16-division mesh used by most unit tests."""
    return build_mesh(100.0, 16, 16, 3.0)


@pytest.fixture(scope="session")
def recon_mesh():
    return build_mesh(100.0, 32, 16, 3.0)


@pytest.fixture(scope="session")
def protocol_reduced():
    return generate_adjacent_protocol(16, True)


@pytest.fixture(scope="session")
def protocol_full():
    return generate_adjacent_protocol(16, False)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def unit_field_small(small_mesh):
    return uniform_field(small_mesh, 1.0)
