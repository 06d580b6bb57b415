import numpy as np
import pytest

from pscat.grid import Grid3
from pscat.medium import Geometry, MediumPhantom, Region, build_phantom


def box_geometry(omega=0.25, psi=0.5, g=0.8, surface_count=96):
    return Geometry.build(
        Region("box", lo=(-omega,) * 3, hi=(omega,) * 3),
        Region("box", lo=(-psi,) * 3, hi=(psi,) * 3),
        Region("box", lo=(-g,) * 3, hi=(g,) * 3),
        surface_count=surface_count,
    )


def cube_grid(n, half=1.05):
    return Grid3((-half,) * 3, 2.0 * half / (n - 1), (n, n, n))


def uniform_phantom(n=48, c=1.0, beta=0.5, half=1.05):
    grid = cube_grid(n, half)
    return MediumPhantom(grid, c * np.ones(grid.shape), beta, box_geometry())


@pytest.fixture(scope="session")
def geometry():
    return box_geometry()


@pytest.fixture(scope="session")
def plateau_phantom():
    """Admissible beta = 0.5 phantom, plateau only."""
    return build_phantom(
        {"beta": 0.5, "geometry": box_geometry(), "grid": cube_grid(48)}
    )


@pytest.fixture(scope="session")
def bump_phantom():
    """Admissible phantom with a mild interior bump."""
    return build_phantom(
        {
            "beta": 0.5,
            "geometry": box_geometry(),
            "grid": cube_grid(48),
            "bumps": [{"center": [0.1, 0.0, 0.0], "radius": 0.14, "amplitude": 0.2}],
        }
    )


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260811)
