"""gamma-Wasserstein geodesics.

The co-geodesic (Hamiltonian) system is

    d rho/dt + div(rho^gamma grad Phi) = 0
    d Phi/dt + (gamma/2) rho^(gamma-1) |grad Phi|^2 = 0

with Hamiltonian ``H = 1/2 int rho^gamma |grad Phi|^2``.  On the grid the
system is exactly Hamiltonian in the quadrature-weighted variables, so the
Strang splitting used here (each substep an implicit midpoint solve) is
symmetric, time reversible and second order.  Distances come from shooting
on the initial potential.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import NamedTuple

import numpy as np

from . import kernels
from .elliptic import signed_weighted_apply, weighted_solve
from .errors import InputError, PositivityFailure, SolverFailure
from .functionals import EPS_POS, DensityField, GammaParams, shared_grid

MIN_STEPS = 16
FP_TOL = 1e-14
FP_MAXIT = 200


class GeodesicPath:
    """Time series of ``(rho_t, Phi_t, H_t)`` on a uniform partition of ``[0, t_final]``."""

    def __init__(self, grid, gamma, times, densities, potentials, hamiltonian_series, steps):
        self.grid = grid
        self.gamma = gamma
        self.times = times
        self.densities = densities
        self.potentials = potentials
        self.hamiltonian_series = hamiltonian_series
        self.steps = steps

    def __len__(self):
        return len(self.times)

    @property
    def hamiltonian_drift(self) -> float:
        H = self.hamiltonian_series
        return float(np.max(np.abs(H - H[0])) / max(abs(H[0]), 1e-300))

    def density(self, k) -> DensityField:
        return DensityField(self.grid, self.densities[k], check_mass=False)


class ShootingResult(NamedTuple):
    distance: float
    path: GeodesicPath
    misfit: float
    converged: bool


def _hamiltonian(grid, rho, phi, gamma):
    g = grid.gradient(phi)
    return 0.5 * grid.integrate(np.maximum(rho, EPS_POS) ** gamma * grid.face_inner(g, g))


def hamiltonian(rho: DensityField, phi, gamma) -> float:
    """``H(rho, Phi) = 1/2 int |grad Phi|^2 rho^gamma dx``."""
    p = GammaParams.of(gamma)
    grid = rho.grid
    return _hamiltonian(grid, rho.values, grid.check_scalar(phi, "potential"), p.gamma)


def _integrate_raw(grid, rho0, phi0, gamma, steps, record_every, t_final, floor):
    dt = t_final / steps
    rhos, phis, status, failed = kernels.cogeodesic(
        grid, rho0, phi0, gamma, dt, steps, record_every, floor, FP_TOL, FP_MAXIT
    )
    if status == kernels.STATUS_FLOOR:
        raise PositivityFailure("density fell below the floor along the geodesic", step=failed)
    if status == kernels.STATUS_BLOWUP:
        raise SolverFailure(f"step {failed}: co-geodesic blew up")
    if status == kernels.STATUS_FIXED_POINT:
        raise SolverFailure(f"step {failed}: implicit midpoint iteration did not converge; use more steps")
    return rhos, phis


def cogeodesic_integrate(rho0, phi0, gamma, steps=256, *, record_every=1, t_final=1.0, floor=EPS_POS):
    """Integrate the co-geodesic system from ``(rho0, Phi0)`` over ``[0, t_final]``."""
    p = GammaParams.of(gamma)
    grid = rho0.grid
    steps = int(steps)
    if steps < MIN_STEPS:
        raise InputError(f"steps must be at least {MIN_STEPS}, got {steps}")
    if record_every < 1 or steps % record_every:
        raise InputError("record_every must divide steps")
    if not (t_final > 0 and np.isfinite(t_final)):
        raise InputError("t_final must be positive")
    phi0 = grid.check_scalar(phi0, "potential")
    rhos, phis = _integrate_raw(grid, rho0.values, phi0, p.gamma, steps, record_every, float(t_final), floor)
    times = np.arange(rhos.shape[0]) * (t_final * record_every / steps)
    H = np.array([_hamiltonian(grid, r, f, p.gamma) for r, f in zip(rhos, phis)])
    return GeodesicPath(grid, p.gamma, times, rhos, phis, H, steps)


# ---------------------------------------------------------------- shooting
def _threads(threads):
    if threads is None:
        try:
            threads = int(os.environ.get("GDM_THREADS", "1"))
        except ValueError:
            threads = 1
    return max(1, int(threads))


def _endpoint(grid, rho0, phi0, gamma, steps, floor):
    rhos, _ = _integrate_raw(grid, rho0, phi0, gamma, steps, steps, 1.0, floor)
    return rhos[-1]


def _shoot(grid, rho0, target, gamma, phi0, steps, tol, max_iter, pool, floor):
    sw = np.sqrt(grid.weights).ravel()
    N = grid.size

    def residual(phi):
        try:
            end = _endpoint(grid, rho0, phi, gamma, steps, floor)
        except (SolverFailure, PositivityFailure):
            return None
        return sw * (end - target).ravel()

    phi = grid.remove_mean(phi0)
    r = residual(phi)
    if r is None:
        raise SolverFailure("shooting initializer leaves the positive cone")
    best = float(np.linalg.norm(r))
    lam = 0.0
    converged = best <= tol
    it = 0
    while not converged and it < max_iter:
        it += 1
        eps = 1e-7 * max(1.0, float(np.max(np.abs(phi))))

        def column(j):
            e = np.zeros(N)
            e[j] = eps
            rj = residual(phi + e.reshape(grid.shape))
            return None if rj is None else (rj - r) / eps

        cols = list(pool.map(column, range(N))) if pool else [column(j) for j in range(N)]
        if any(c is None for c in cols):
            raise SolverFailure("finite-difference probe left the positive cone")
        J = np.stack(cols, axis=1)
        improved = False
        for _ in range(12):
            if lam == 0.0:
                delta = np.linalg.lstsq(J, -r, rcond=1e-12)[0]
            else:
                A = np.vstack([J, np.sqrt(lam) * np.eye(N)])
                delta = np.linalg.lstsq(A, np.concatenate([-r, np.zeros(N)]), rcond=None)[0]
            trial = grid.remove_mean(phi + delta.reshape(grid.shape))
            rt = residual(trial)
            if rt is not None and np.linalg.norm(rt) < best:
                phi, r, best = trial, rt, float(np.linalg.norm(rt))
                lam = lam / 4.0 if lam > 1e-12 else 0.0
                improved = True
                break
            lam = max(4.0 * lam, 1e-6 * float(np.max(np.sum(J * J, axis=0))))
        converged = best <= tol
        if not improved:
            break
    return phi, best, converged


def wasserstein_gamma(rho, mu, gamma, *, steps=128, tol=1e-10, max_iter=30, continuation=False,
                      continuation_steps=4, threads=None, floor=EPS_POS) -> ShootingResult:
    """gamma-Wasserstein distance by shooting on the initial potential.

    Minimises ``1/2 ||rho(1; Phi0) - mu||^2`` over ``Phi0`` with a damped
    Gauss-Newton iteration whose Jacobian columns are forward differences.
    The initial guess is ``Phi0 = (-Delta_{rho^gamma})^{-1}(mu - rho)``, exact
    for gamma = 0.  With ``continuation`` the exponent is ramped up from 0.
    Returns ``(distance, path, misfit, converged)``; ``distance = sqrt(2 H)``
    on the converged path and ``misfit = ||rho(1) - mu||_{L^2}``.
    """
    grid = shared_grid(rho, mu)
    p = GammaParams.of(gamma)
    if steps < MIN_STEPS:
        raise InputError(f"steps must be at least {MIN_STEPS}, got {steps}")
    r0 = rho.values
    target = mu.values
    nthreads = _threads(threads)
    pool = ThreadPoolExecutor(nthreads) if nthreads > 1 else None
    try:
        schedule = [p.gamma]
        if continuation and p.gamma != 0.0:
            schedule = list(np.linspace(0.0, p.gamma, continuation_steps + 1))
        phi = None
        misfit, converged = np.inf, False
        for g in schedule:
            if phi is None:
                phi = weighted_solve(grid, r0**g, target - r0)
            phi, misfit, converged = _shoot(grid, r0, target, g, phi, steps, tol, max_iter, pool, floor)
    finally:
        if pool:
            pool.shutdown()
    path = cogeodesic_integrate(rho, phi, p.gamma, steps, floor=floor)
    distance = float(np.sqrt(2.0 * path.hamiltonian_series[0]))
    return ShootingResult(distance, path, float(misfit), bool(converged))


def quantile_distance_1d(rho: DensityField, mu: DensityField, refine=32) -> float:
    """Classical 2-Wasserstein distance on a 1D reflecting interval via quantiles.

    Both densities are linearly interpolated, their CDFs are accumulated on a
    refined grid and ``int_0^1 |F_rho^-1(s) - F_mu^-1(s)|^2 ds`` is integrated
    with the midpoint rule in ``s``.
    """
    grid = shared_grid(rho, mu)
    if grid.dim != 1 or grid.periodic:
        raise InputError("the quantile oracle needs a 1D reflecting grid")
    x = grid.axes[0]
    xf = np.linspace(x[0], x[-1], (len(x) - 1) * refine + 1)

    def inverse_cdf(dens, s):
        d = np.interp(xf, x, dens)
        F = np.concatenate([[0.0], np.cumsum(0.5 * (d[1:] + d[:-1]) * np.diff(xf))])
        F /= F[-1]
        return np.interp(s, F, xf)

    m = 8 * len(xf)
    s = (np.arange(m) + 0.5) / m
    diff = inverse_cdf(rho.values, s) - inverse_cdf(mu.values, s)
    return float(np.sqrt(np.mean(diff**2)))


# ------------------------------------------------------------ Christoffel
def christoffel_apply(rho: DensityField, gamma, sigma1, sigma2):
    """Christoffel symbol ``Gamma_rho(sigma1, sigma2)`` of the gamma-metric."""
    grid = rho.grid
    p = GammaParams.of(gamma)
    g = p.gamma
    if g == 0.0:
        return np.zeros(grid.shape)
    r = rho.values
    rg = r**g
    phi1 = weighted_solve(grid, rg, sigma1)
    phi2 = weighted_solve(grid, rg, sigma2)
    return _christoffel_potentials(grid, r, g, phi1, phi2)


def _christoffel_potentials(grid, r, g, phi1, phi2):
    rg = r**g
    rg1 = r ** (g - 1.0)
    lap1 = signed_weighted_apply(grid, rg, phi1)
    lap2 = signed_weighted_apply(grid, rg, phi2)
    a12 = signed_weighted_apply(grid, rg1 * lap1, phi2)
    a21 = signed_weighted_apply(grid, rg1 * lap2, phi1)
    cross = grid.face_inner(grid.gradient(phi1), grid.gradient(phi2)) * rg1
    c = signed_weighted_apply(grid, rg, cross)
    return -0.5 * g * ((a12 + a21) + c)


def geodesic_residual(path: GeodesicPath):
    """``max_t ||d_tt rho + Gamma(d_t rho, d_t rho)|| / max_t ||d_tt rho||`` by central
    differences in time over the recorded slices."""
    grid = path.grid
    R = path.densities
    dt = path.times[1] - path.times[0]
    num = 0.0
    den = 0.0
    for k in range(1, len(R) - 1):
        rtt = (R[k + 1] - 2 * R[k] + R[k - 1]) / dt**2
        rt = (R[k + 1] - R[k - 1]) / (2 * dt)
        rt = rt - grid.integrate(rt) / grid.volume
        dens = DensityField(grid, R[k], check_mass=False)
        res = rtt + christoffel_apply(dens, path.gamma, rt, rt)
        num = max(num, grid.l2_norm(res))
        den = max(den, grid.l2_norm(rtt))
    return num / max(den, 1e-300)


# ------------------------------------------------------ Lagrangian picture
def _velocity_faces(grid, rho, phi, gamma):
    """Face velocities ``rho^(gamma-1) d_x Phi`` as flux over face density."""
    flux = grid.face_mean(rho**gamma)[0] * grid.gradient(phi)[0]
    dens = grid.face_mean(rho)[0]
    v = np.zeros_like(flux)
    ok = dens > 0
    v[ok] = flux[ok] / dens[ok]
    return v


def _cubic_sampler(origin, h, count, periodic):
    """Cubic Hermite interpolation on ``origin + h*k`` (central-difference slopes).

    The interpolant is C^1, so particle accelerations do not pick up the O(h)
    jumps a piecewise-linear velocity field would produce at every node.
    """

    def sample(values, xq):
        values = np.asarray(values, dtype=float)
        s = (np.asarray(xq, dtype=float) - origin) / h
        if periodic:
            s = s % count
            i = np.floor(s).astype(int)
            slope = 0.5 * (np.roll(values, -1) - np.roll(values, 1))
            j = (i + 1) % count
        else:
            if np.any(s < -1e-12) or np.any(s > count - 1 + 1e-12):
                raise InputError("a particle left the interpolation domain")
            i = np.clip(np.floor(s).astype(int), 0, count - 2)
            slope = np.gradient(values, edge_order=2)
            j = i + 1
        f = s - i
        f2, f3 = f * f, f * f * f
        return (
            (2 * f3 - 3 * f2 + 1) * values[i]
            + (f3 - 2 * f2 + f) * slope[i]
            + (-2 * f3 + 3 * f2) * values[j]
            + (f3 - f2) * slope[j]
        )

    return sample


def lagrangian_residual(path: GeodesicPath, particles=48):
    """Residual of the Lagrangian geodesic ODE along characteristics (1D only).

    Particles follow ``dX/dt = rho^(gamma-1) d_x Phi`` (RK2, fields sampled by
    cubic Hermite interpolation in space, linearly in time).  The residual

        X'' + (gamma-1)/2 d_x|v|^2 + (gamma-1) v d_x v - (gamma-2)(gamma-1)/2 d_x log rho |v|^2

    is sampled at interior times and divided by the largest of ``|X''|``,
    ``|d_t v|`` and ``|v d_x v|`` seen along the trajectories, so the result
    stays meaningful when ``X'' = 0`` exactly (gamma = 1).
    """
    grid = path.grid
    if grid.dim != 1:
        raise InputError("lagrangian_residual is implemented for 1D paths")
    g = path.gamma
    a = g - 1.0
    x = grid.axes[0]
    h = grid.h[0]
    L = grid.extent[0]
    x0 = grid.origin[0]
    T = len(path.times)
    dt = path.times[1] - path.times[0]
    rhos = np.maximum(path.densities, EPS_POS)
    vf = np.array([_velocity_faces(grid, r, f, g) for r, f in zip(rhos, path.potentials)])
    node_sample = _cubic_sampler(x[0], h, len(x), grid.periodic)
    nf = len(x) if grid.periodic else len(x) - 1
    face_sample = _cubic_sampler(x[0] + 0.5 * h, h, nf, grid.periodic)

    def sample(field, xq, on_faces):
        if on_faces:
            return face_sample(field[:nf], xq)
        return node_sample(field, xq)

    if grid.periodic:
        X = x0 + (np.arange(particles) + 0.5) * L / particles
    else:
        X = x0 + L * (0.15 + 0.7 * (np.arange(particles) + 0.5) / particles)
    traj = np.empty((T, particles))
    traj[0] = X
    for k in range(T - 1):
        v0 = sample(vf[k], X, True)
        vmid_field = 0.5 * (vf[k] + vf[k + 1])
        Xm = X + 0.5 * dt * v0
        X = X + dt * sample(vmid_field, Xm, True)
        traj[k + 1] = X

    # node-based Eulerian fields for the residual terms
    def node_v(k):
        r, f = rhos[k], path.potentials[k]
        return r**a * grid.node_gradient(f)[0]

    vn = np.array([node_v(k) for k in range(T)])
    num = 0.0
    scale = 0.0
    for k in range(1, T - 1):
        Xk = traj[k]
        acc = (traj[k + 1] - 2 * traj[k] + traj[k - 1]) / dt**2
        v = vn[k]
        dv = grid.node_gradient(v, closure="onesided")[0]
        dv2 = grid.node_gradient(v * v, closure="onesided")[0]
        dlog = grid.node_gradient(np.log(rhos[k]), closure="onesided")[0]
        vt = (vn[k + 1] - vn[k - 1]) / (2 * dt)
        vs = sample(v, Xk, False)
        res = (
            acc
            + 0.5 * a * sample(dv2, Xk, False)
            + a * vs * sample(dv, Xk, False)
            - 0.5 * (g - 2.0) * a * sample(dlog, Xk, False) * vs**2
        )
        num = max(num, float(np.max(np.abs(res))))
        scale = max(
            scale,
            float(np.max(np.abs(acc))),
            float(np.max(np.abs(sample(vt, Xk, False)))),
            float(np.max(np.abs(vs * sample(dv, Xk, False)))),
        )
    if scale == 0.0:
        return 0.0
    return num / scale
