"""Riemannian calculus of the gamma-divergence on the density manifold.

Everything lives on a flat grid, so Ricci curvature is identically zero; the
curvature slot is kept as an explicit ``grid.ricci()`` term so the integrands
read like the formulas they implement.

Discretisation conventions
    * derivatives of the potential use the mirror closure (zero-flux walls);
    * derivatives of coefficient fields built from ``mu`` or ``rho`` use
      one-sided second-order closures at reflecting walls, where those fields
      need not have zero normal derivative.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .elliptic import weighted_apply
from .errors import InputError
from .functionals import ONE, DensityField, GammaParams, divergence_gamma, first_variation, shared_grid
from .geodesic import cogeodesic_integrate
from .grid import dot_nodes, sym_frobenius_sq, sym_identity, sym_quadratic


class HessianReport(NamedTuple):
    closed_form: float
    fd_value: float
    relative_gap: float


class YanoResult(NamedTuple):
    lhs: float
    rhs: float
    relative_gap: float


class JForm(NamedTuple):
    value: float
    field: np.ndarray


def relative_gap(a, b, floor=1e-14):
    return float(abs(a - b) / max(abs(a), floor))


# ------------------------------------------------------------------ pieces
def psi_field(mu: DensityField, gamma):
    """``psi = (mu^(gamma-1) - 1)/(gamma-1)``, which is ``log mu`` at gamma = 1.

    ``-Hess psi`` is the ``-(1/(gamma-1)) Hess mu^(gamma-1)`` term of the
    curvature tensors (the constant shift is invisible to the Hessian).
    """
    p = GammaParams.of(gamma)
    logm = np.log(mu.values)
    if p.branch == ONE:
        return logm
    return np.expm1((p.gamma - 1.0) * logm) / (p.gamma - 1.0)


def coefficient_tensor(mu: DensityField, gamma):
    """``mu^(gamma-1) Ric - Delta mu^(gamma-1) Id - Hess psi`` as a symmetric field."""
    grid = mu.grid
    p = GammaParams.of(gamma)
    mg1 = mu.values ** (p.gamma - 1.0)
    hess_psi = grid.hessian_field(psi_field(mu, p), closure="onesided")
    lap_m = _trace(grid.hessian_field(mg1, closure="onesided"))
    ricci = grid.ricci() * mg1
    return ricci - hess_psi - sym_identity(grid, lap_m)


def _trace(S):
    if S.shape[0] == 1:
        return S[0]
    return S[0] + S[2]


def cross_term(u, v):
    """Pointwise ``(u, v)^2 - |u|^2 |v|^2`` via Lagrange's identity (exactly 0 in 1D)."""
    out = np.zeros_like(u[0])
    d = len(u)
    for i in range(d):
        for j in range(i + 1, d):
            out = out - (u[i] * v[j] - u[j] * v[i]) ** 2
    return out


def _log_gradient(grid, dens):
    return grid.node_gradient(np.log(dens), closure="onesided")


# -------------------------------------------------------------- operations
def grad_divergence(rho: DensityField, mu: DensityField, gamma):
    """Riemannian gradient ``-div(rho^gamma grad dD)`` of the gamma-divergence."""
    grid = shared_grid(rho, mu)
    p = GammaParams.of(gamma)
    return -weighted_apply(grid, rho.values**p.gamma, first_variation(rho, mu, p))


def j_form(rho: DensityField, mu: DensityField, phi) -> JForm:
    """The bilinear form ``J(Phi, Phi)`` pointwise and integrated.

    ``J = (grad log rho, grad Phi)(grad log mu, grad Phi)
          - 1/2 (grad log rho, grad log rho + grad log mu) |grad Phi|^2``.
    At ``rho == mu`` it is evaluated as ``(grad log mu, grad Phi)^2 -
    |grad log mu|^2 |grad Phi|^2`` through Lagrange's identity, so the
    pointwise sign is exact.
    """
    grid = shared_grid(rho, mu)
    phi = grid.check_scalar(phi, "potential")
    gp = grid.node_gradient(phi)
    gm = _log_gradient(grid, mu.values)
    if rho is mu or np.array_equal(rho.values, mu.values):
        field = cross_term(gm, gp)
    else:
        gr = _log_gradient(grid, rho.values)
        field = dot_nodes(gr, gp) * dot_nodes(gm, gp) - 0.5 * dot_nodes(gr, [a + b for a, b in zip(gr, gm)]) * dot_nodes(gp, gp)
    return JForm(grid.integrate(field), field)


def hessian_integrand(rho: DensityField, mu: DensityField, gamma, phi):
    """Pointwise integrand of the closed-form Hessian ``Hess D(sigma, sigma)``,
    ``sigma = -div(rho^gamma grad Phi)``:

        rho^gamma { C(grad Phi, grad Phi) + mu^(gamma-1) |Hess Phi|^2
                    + gamma(gamma-1) mu^(gamma-1) J(Phi, Phi) }

    with ``C = mu^(gamma-1) Ric - Delta mu^(gamma-1) - Hess psi``.
    """
    grid = shared_grid(rho, mu)
    p = GammaParams.of(gamma)
    g = p.gamma
    phi = grid.check_scalar(phi, "potential")
    gp = grid.node_gradient(phi)
    hess = grid.hessian_field(phi)
    rg = rho.values**g
    if p.branch == ONE:
        # (Ric - Hess log mu)(grad Phi, grad Phi) + |Hess Phi|^2
        C = grid.ricci() - grid.hessian_field(np.log(mu.values), closure="onesided")
        return rg * (sym_quadratic(C, gp) + sym_frobenius_sq(hess))
    mg1 = mu.values ** (g - 1.0)
    C = coefficient_tensor(mu, p)
    J = j_form(rho, mu, phi).field
    return rg * (sym_quadratic(C, gp) + mg1 * sym_frobenius_sq(hess) + g * (g - 1.0) * mg1 * J)


def hessian_form(rho: DensityField, mu: DensityField, gamma, phi) -> float:
    """Closed-form ``Hess_g D_gamma(rho|mu)(sigma, sigma)`` for ``sigma = -div(rho^gamma grad Phi)``."""
    return rho.grid.integrate(hessian_integrand(rho, mu, gamma, phi))


def hessian_fd(rho: DensityField, mu: DensityField, gamma, phi, *, steps=1024, tau_steps=16) -> float:
    """``d^2/dt^2 D_gamma(rho_t | mu)`` at ``t = 0`` along the co-geodesic from ``(rho, Phi)``.

    Uses the time step ``1/steps`` and the 5-point stencil with spacing
    ``tau = tau_steps/steps``; negative times come from integrating
    ``(rho, -Phi)`` forward (the system is time reversible).
    """
    grid = shared_grid(rho, mu)
    p = GammaParams.of(gamma)
    phi = grid.check_scalar(phi, "potential")
    dt = 1.0 / steps
    tau = tau_steps * dt
    n = 2 * tau_steps
    fwd = cogeodesic_integrate(rho, phi, p.gamma, n, record_every=tau_steps, t_final=n * dt)
    bwd = cogeodesic_integrate(rho, -phi, p.gamma, n, record_every=tau_steps, t_final=n * dt)

    def D(values):
        return divergence_gamma(DensityField(grid, values, check_mass=False), mu, p)

    d0 = divergence_gamma(rho, mu, p)
    dp1, dp2 = D(fwd.densities[1]), D(fwd.densities[2])
    dm1, dm2 = D(bwd.densities[1]), D(bwd.densities[2])
    return (-dp2 + 16.0 * dp1 - 30.0 * d0 + 16.0 * dm1 - dm2) / (12.0 * tau**2)


def hessian_report(rho, mu, gamma, phi, **kw) -> HessianReport:
    closed = hessian_form(rho, mu, gamma, phi)
    fd = hessian_fd(rho, mu, gamma, phi, **kw)
    return HessianReport(closed, fd, relative_gap(closed, fd))


def hessian_at_equilibrium(mu: DensityField, gamma, phi) -> float:
    """``int mu^-1 (div(mu^gamma grad Phi))^2 dx`` (the Hessian at rho = mu)."""
    grid = mu.grid
    p = GammaParams.of(gamma)
    s = weighted_apply(grid, mu.values**p.gamma, grid.check_scalar(phi, "potential"))
    return grid.integrate(s * s / mu.values)


def yano_rhs(mu: DensityField, gamma, phi) -> float:
    """Right side of the generalized Yano formula (flat, Ric = 0)."""
    grid = mu.grid
    p = GammaParams.of(gamma)
    g = p.gamma
    phi = grid.check_scalar(phi, "potential")
    gp = grid.node_gradient(phi)
    mg = mu.values**g
    mg1 = mu.values ** (g - 1.0)
    C = coefficient_tensor(mu, p)
    cross = cross_term(_log_gradient(grid, mu.values), gp)
    integrand = mg * (sym_quadratic(C, gp) + mg1 * sym_frobenius_sq(grid.hessian_field(phi)) + g * (g - 1.0) * mg1 * cross)
    return grid.integrate(integrand)


def yano_check(mu: DensityField, gamma, phi) -> YanoResult:
    """Both sides of the generalized Yano formula and their relative gap."""
    lhs = hessian_at_equilibrium(mu, gamma, phi)
    rhs = yano_rhs(mu, gamma, phi)
    return YanoResult(lhs, rhs, relative_gap(lhs, rhs))


# ----------------------------------------------------------- ratio bound
def j_ratio(a, a0):
    """``J1/J2`` in the vector form ``((a+a0,a)(a0,a) - 1/2(a+a0,a+2a0)(a,a))/(a,a)``.

    ``a`` and ``a0`` have shape ``(..., dim)``.
    """
    a = np.asarray(a, dtype=float)
    a0 = np.asarray(a0, dtype=float)
    aa = np.sum(a * a, axis=-1)
    a0a = np.sum(a0 * a, axis=-1)
    num = np.sum((a + a0) * a, axis=-1) * a0a - 0.5 * np.sum((a + a0) * (a + 2 * a0), axis=-1) * aa
    return num / aa


def j_ratio_check(samples, *, seed=0, dims=(1, 2, 3), batch=200_000) -> float:
    """Largest ``J1/J2 - |a0|^2/8`` over random ``(a, a0)`` pairs; the bound says <= 0.

    Magnitudes are drawn log-uniformly over two decades so that the ratio is
    probed near its maximiser ``a = -a0/2`` as well as far from it.
    """
    samples = int(samples)
    if samples < 1:
        raise InputError("samples must be positive")
    rng = np.random.default_rng(seed)
    worst = -np.inf
    done = 0
    k = 0
    while done < samples:
        m = min(batch, samples - done)
        d = dims[k % len(dims)]
        k += 1
        a = rng.standard_normal((m, d)) * 10 ** rng.uniform(-1, 1, (m, 1))
        a0 = rng.standard_normal((m, d)) * 10 ** rng.uniform(-1, 1, (m, 1))
        norms = np.sum(a * a, axis=-1)
        while np.any(norms == 0.0):  # resample degenerate a
            bad = norms == 0.0
            a[bad] = rng.standard_normal((int(bad.sum()), d))
            norms = np.sum(a * a, axis=-1)
        excess = (j_ratio(a, a0) - 0.125 * np.sum(a0 * a0, axis=-1)) / np.maximum(1.0, np.sum(a0 * a0, axis=-1))
        worst = max(worst, float(np.max(excess)))
        done += m
    return worst


def j_ratio_scan(num=200_001, norm_a0=1.0) -> float:
    """Best ratio along the extremal family ``a = -s a0`` (cos theta = -1), s in (0, 1]."""
    a0 = np.array([norm_a0])
    s = np.linspace(0.0, 1.0, num)[1:]
    vals = j_ratio(-s[:, None] * a0, np.broadcast_to(a0, (len(s), 1)))
    return float(np.max(vals))
