"""Weighted elliptic operator ``div(h grad .)``, its inverse, the density
manifold metric and the H^-1 distance.

Tangent vectors (``sigma``) are zero-integral node fields; potentials
(``Phi``) are represented by their zero-integral member.  The face
coefficient of the operator is the arithmetic mean of ``h`` on the two
adjacent nodes, which keeps the operator symmetric in the quadrature inner
product.
"""

import numpy as np

from . import kernels
from .errors import InputError, SolverFailure
from .functionals import DensityField, GammaParams, shared_grid

SOLVE_TOL = 1e-12
ACCEPT_TOL = 1e-10
MEAN_TOL = 1e-10


def _check_weight(grid, h):
    h = np.broadcast_to(np.asarray(h, dtype=float), grid.shape)
    if not np.all(np.isfinite(h)) or np.min(h) <= 0:
        raise InputError("weight must be strictly positive and finite")
    return h


def signed_weighted_apply(grid, c, phi):
    """``div(c grad phi)`` with no sign check on ``c`` (used for curvature terms)."""
    c = np.broadcast_to(np.asarray(c, dtype=float), grid.shape)
    return kernels.wlap(grid, grid.face_mean(c), grid.check_scalar(phi, "potential"))


def weighted_apply(grid, h, phi):
    """``Delta_h phi = div(h grad phi)`` for a positive weight ``h``; integrates to 0."""
    h = _check_weight(grid, h)
    return kernels.wlap(grid, grid.face_mean(h), grid.check_scalar(phi, "potential"))


def check_tangent(grid, sigma, name="tangent"):
    sigma = grid.check_scalar(sigma, name)
    scale = max(1.0, grid.integrate(np.abs(sigma)))
    total = grid.integrate(sigma)
    if abs(total) > MEAN_TOL * scale:
        raise InputError(f"{name} must integrate to zero (got {total:.3e})")
    return sigma - total / grid.volume


def weighted_solve(grid, h, sigma, *, tol=SOLVE_TOL, maxiter=None, x0=None):
    """Zero-mean ``Phi`` with ``div(h grad Phi) = -sigma`` (Jacobi PCG)."""
    h = _check_weight(grid, h)
    sigma = check_tangent(grid, sigma)
    if maxiter is None:
        maxiter = 50 * max(grid.n)
    x0 = np.zeros(grid.shape) if x0 is None else grid.check_scalar(x0)
    phi, it, rel = kernels.pcg(grid, grid.face_mean(h), np.zeros(grid.shape), 1.0, sigma, x0, tol, maxiter, True)
    if not rel <= max(tol, ACCEPT_TOL):
        raise SolverFailure(f"weighted_solve: relative residual {rel:.3e} after {it} iterations")
    return phi


def metric_inner(rho: DensityField, gamma, sigma1, sigma2) -> float:
    """``g_rho(sigma1, sigma2) = int sigma1 (-Delta_{rho^gamma})^{-1} sigma2 dx``."""
    grid = rho.grid
    p = GammaParams.of(gamma)
    sigma1 = check_tangent(grid, sigma1)
    phi2 = weighted_solve(grid, rho.values**p.gamma, sigma2)
    return grid.integrate(sigma1 * phi2)


def metric_inner_potentials(rho: DensityField, gamma, phi1, phi2) -> float:
    """Cotangent form ``int (grad Phi1, grad Phi2) rho^gamma dx``."""
    grid = rho.grid
    p = GammaParams.of(gamma)
    return grid.integrate(rho.values**p.gamma * grid.face_inner(grid.gradient(phi1), grid.gradient(phi2)))


def h_minus1_distance(rho: DensityField, mu: DensityField) -> float:
    """``sqrt(int (rho-mu) (-Delta)^{-1} (rho-mu) dx)``."""
    grid = shared_grid(rho, mu)
    sigma = rho.values - mu.values
    phi = weighted_solve(grid, np.ones(grid.shape), sigma - grid.integrate(sigma) / grid.volume)
    return float(np.sqrt(max(grid.integrate(sigma * phi), 0.0)))
