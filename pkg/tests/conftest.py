import numpy as np
import pytest

from plapflow import build_lattice_ball


@pytest.fixture(scope="session")
def line_r2():
    """Z^1 ball of radius 2: five vertices, two of them on the rim."""
    return build_lattice_ball(1, 2)


@pytest.fixture(scope="session")
def plane_r8():
    return build_lattice_ball(2, 8)


@pytest.fixture(scope="session")
def cube_r6():
    return build_lattice_ball(3, 6)


@pytest.fixture(scope="session")
def rng():
    return np.random.Generator(np.random.PCG64(12345))
