import numpy as np
import pytest

from gdm.functionals import DensityField
from gdm.grid import build_grid


def circle(n=128, extent=1.0):
    return build_grid(dim=1, topology="periodic", extent=extent, n=n)


def interval(n=128, extent=1.0, origin=0.0):
    return build_grid(dim=1, topology="reflecting", extent=extent, n=n, origin=origin)


def torus(n=64):
    return build_grid(dim=2, topology="periodic", extent=1.0, n=n)


def box(n=32):
    return build_grid(dim=2, topology="reflecting", extent=(1.0, 1.5), n=(n, n + 4))


def density(grid, logvalues):
    return DensityField.normalized(grid, np.exp(logvalues))


def smooth_pair(grid):
    """A fixed pair (rho, mu) of smooth positive densities on ``grid``."""
    c = grid.coords()
    w = 2 * np.pi if grid.periodic else np.pi
    xi = [(c[a] - grid.origin[a]) / grid.extent[a] for a in range(grid.dim)]
    lm = 0.3 * np.cos(w * xi[0])
    lr = 0.2 * np.sin(w * xi[0]) + 0.1 * np.cos(2 * w * xi[0])
    if grid.dim == 2:
        lm = lm + 0.2 * np.sin(w * xi[1])
        lr = lr + 0.15 * np.cos(w * xi[1])
    return density(grid, lr), density(grid, lm)


def mu_family(grid, k):
    """Three smooth reference densities per dimension (the test battery)."""
    c = grid.coords()
    w = 2 * np.pi if grid.periodic else np.pi
    xi = [(c[a] - grid.origin[a]) / grid.extent[a] for a in range(grid.dim)]
    if grid.dim == 1:
        logs = [0.3 * np.cos(w * xi[0]), 0.2 * np.sin(w * xi[0]) + 0.15 * np.cos(2 * w * xi[0]), -0.25 * np.cos(w * xi[0]) ** 2]
    else:
        logs = [
            0.3 * np.cos(w * xi[0]) + 0.2 * np.sin(w * xi[1]),
            0.25 * np.sin(w * xi[0]) * np.cos(w * xi[1]),
            0.2 * np.cos(w * (xi[0] + xi[1])) - 0.1 * np.sin(2 * w * xi[1]),
        ]
    return density(grid, logs[k])


def potential(grid, which):
    """Two smooth test potentials compatible with the boundary condition."""
    c = grid.coords()
    w = 2 * np.pi if grid.periodic else np.pi
    xi = [(c[a] - grid.origin[a]) / grid.extent[a] for a in range(grid.dim)]
    if grid.dim == 1:
        return np.sin(w * xi[0]) if (which == 0 and grid.periodic) else np.cos((1 + which) * w * xi[0])
    if which == 0:
        return np.sin(w * xi[0]) * np.cos(w * xi[1]) if grid.periodic else np.cos(w * xi[0]) * np.cos(w * xi[1])
    return np.cos(2 * w * xi[0]) + 0.5 * np.cos(w * xi[1])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
