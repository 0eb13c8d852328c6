"""Bakry-Emery side: criterion tensors, the mean-field Gamma operators and
the Hessian = int Gamma_2 rho identity.

Criterion tensors (flat, Ric = 0), with ``psi`` as in ``geometry.psi_field``:

    kappa tensor     -Hess psi - Delta mu^(gamma-1) + 1/8 gamma(gamma-1) |grad log mu|^2 mu^(gamma-1)
    Poincare tensor  -Hess psi - Delta mu^(gamma-1)                        for gamma in [0, 1]
                     ... - gamma(gamma-1) |grad log mu|^2 mu^(gamma-1)      otherwise

Scalar terms multiply the identity.  The constants are grid minima of the
pointwise smallest eigenvalue.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .flow import generator_backward
from .functionals import DensityField, GammaParams, first_variation, shared_grid
from .geometry import coefficient_tensor, hessian_form, relative_gap
from .grid import dot_nodes, sym_identity, sym_min_eig


@dataclass
class CriterionReport:
    tensor: np.ndarray
    tensor_min_eig: np.ndarray
    kappa: float
    positive: bool
    branch: str = "kappa"


def _report(tensor, branch):
    lam = sym_min_eig(tensor)
    kappa = float(np.min(lam))
    return CriterionReport(tensor, lam, kappa, kappa > 0, branch)


def _log_grad_sq(mu):
    gm = mu.grid.node_gradient(np.log(mu.values), closure="onesided")
    return dot_nodes(gm, gm)


def criterion_tensor(mu: DensityField, gamma):
    p = GammaParams.of(gamma)
    g = p.gamma
    grid = mu.grid
    extra = 0.125 * g * (g - 1.0) * _log_grad_sq(mu) * mu.values ** (g - 1.0)
    return coefficient_tensor(mu, p) + sym_identity(grid, extra)


def criterion_kappa(mu: DensityField, gamma) -> CriterionReport:
    """Hypercontractivity curvature: pointwise smallest eigenvalue and its minimum ``kappa``."""
    return _report(criterion_tensor(mu, gamma), "kappa")


def poincare_tensor(mu: DensityField, gamma):
    p = GammaParams.of(gamma)
    g = p.gamma
    T = coefficient_tensor(mu, p)
    if 0.0 <= g <= 1.0:
        return T
    extra = g * (g - 1.0) * _log_grad_sq(mu) * mu.values ** (g - 1.0)
    return T - sym_identity(mu.grid, extra)


def poincare_bound(mu: DensityField, gamma) -> CriterionReport:
    """Curvature lower bound ``lambda`` for the generalized Poincare inequality."""
    g = GammaParams.of(gamma).gamma
    return _report(poincare_tensor(mu, gamma), "interval" if 0.0 <= g <= 1.0 else "outer")


def gamma1(phi1, phi2, rho: DensityField, gamma):
    """``Gamma_1(Phi1, Phi2, rho) = (grad Phi1, grad Phi2) rho^(gamma-1)``."""
    grid = rho.grid
    p = GammaParams.of(gamma)
    g1 = grid.gradient(grid.check_scalar(phi1, "potential"))
    g2 = grid.gradient(grid.check_scalar(phi2, "potential"))
    return grid.face_inner(g1, g2) * rho.values ** (p.gamma - 1.0)


def gamma2(phi1, phi2, rho: DensityField, gamma, mu: DensityField):
    """``Gamma_2 = gamma/2 L Gamma_1(Phi1, Phi2) - 1/2 Gamma_1(Phi1, L Phi2) - 1/2 Gamma_1(Phi2, L Phi1)``

    with ``L`` the backward generator of the gamma-drift diffusion towards ``mu``.
    """
    shared_grid(rho, mu)
    p = GammaParams.of(gamma)
    G11 = gamma1(phi1, phi2, rho, p)
    L1 = generator_backward(phi1, mu, p)
    L2 = generator_backward(phi2, mu, p)
    return 0.5 * p.gamma * generator_backward(G11, mu, p) - 0.5 * (gamma1(phi1, L2, rho, p) + gamma1(phi2, L1, rho, p))


def prop52_check(rho: DensityField, mu: DensityField, gamma, phi):
    """``(hessian_form, int Gamma_2(Phi, Phi, rho) rho, relative gap)``."""
    lhs = hessian_form(rho, mu, gamma, phi)
    rhs = rho.grid.integrate(gamma2(phi, phi, rho, gamma, mu) * rho.values)
    return lhs, rhs, relative_gap(lhs, rhs)


def be_criterion_ratio(rho: DensityField, mu: DensityField, gamma) -> float:
    """``int Gamma_2 rho / int Gamma_1 rho`` at the (mean-removed) first variation of ``D_gamma``."""
    grid = shared_grid(rho, mu)
    p = GammaParams.of(gamma)
    if rho is mu or np.array_equal(rho.values, mu.values):
        raise InputError("the criterion ratio is undefined at rho = mu")
    phi = grid.remove_mean(first_variation(rho, mu, p))
    den = grid.integrate(gamma1(phi, phi, rho, p) * rho.values)
    if not den > 0:
        raise InputError("the criterion ratio is undefined: zero Gamma_1 energy")
    num = grid.integrate(gamma2(phi, phi, rho, p, mu) * rho.values)
    return num / den
