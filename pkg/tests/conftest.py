import numpy as np
import pytest

from fnbasis.mesh import Mesh
from fnbasis.synthetic import bumpy_sphere, flat_strip, icosphere, tetrahedron


@pytest.fixture
def tetra():
    return tetrahedron()


@pytest.fixture
def unit_square():
    """Unit square split along the (0, 2) diagonal."""
    return Mesh(
        [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]],
        [[0, 1, 2], [0, 2, 3]],
        name="square",
    )


@pytest.fixture
def equilateral():
    return Mesh(
        [[0, 0, 0], [1, 0, 0], [0.5, np.sqrt(3) / 2, 0]], [[0, 1, 2]], name="eq"
    )


@pytest.fixture(scope="session")
def sphere_642():
    return icosphere(3)


@pytest.fixture(scope="session")
def sphere_2562():
    return icosphere(4)


@pytest.fixture(scope="session")
def blob():
    """Asymmetric deformed sphere: simple spectrum, no symmetry degeneracies."""
    return bumpy_sphere(2, amplitude=0.3, seed=7, name="blob")


@pytest.fixture
def strip():
    return flat_strip(3)
