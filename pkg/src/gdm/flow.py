"""gamma-drift-diffusion at the PDE level.

Backward generator    L Phi  = mu^-1 div(mu^gamma grad Phi)
Forward operator      L* rho = div(mu^gamma grad(rho/mu))

``L`` is written in divergence form; for smooth fields it equals
``gamma/(gamma-1) (grad mu^(gamma-1), grad Phi) + mu^(gamma-1) Delta Phi`` and
on the grid it is the exact quadrature adjoint of ``L*``.  ``run_flow``
integrates ``d rho/dt = L* rho`` by implicit Euler, written in the unknown
``u = rho/mu`` so that each step is a symmetric positive-definite solve.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .elliptic import signed_weighted_apply, weighted_apply
from .errors import InputError, PositivityFailure, SolverFailure
from .functionals import ONE, DensityField, GammaParams, divergence_gamma, fisher_gamma, shared_grid

NEG_TOL = -1e-8
STEP_TOL = 1e-13


@dataclass
class FlowTrace:
    times: np.ndarray
    divergence_series: np.ndarray
    fisher_series: np.ndarray
    mass_drift: float
    min_density: float
    gamma: float
    dt: float
    densities: list = field(default_factory=list, repr=False)
    density_times: list = field(default_factory=list, repr=False)
    final: DensityField | None = field(default=None, repr=False)

    def __len__(self):
        return len(self.times)


def generator_backward(phi, mu: DensityField, gamma, *, form="divergence"):
    """Backward generator ``L_gamma Phi``.

    ``form="divergence"`` (default) is ``mu^-1 div(mu^gamma grad Phi)``, the
    exact discrete adjoint of :func:`forward_operator`.  ``form="expanded"``
    evaluates ``gamma/(gamma-1) (grad mu^(gamma-1), grad Phi) + mu^(gamma-1) Delta Phi``
    (``(grad log mu, grad Phi) + Delta Phi`` at gamma = 1) with centred node
    gradients; it agrees to second order in the grid spacing.
    """
    grid = mu.grid
    p = GammaParams.of(gamma)
    phi = grid.check_scalar(phi, "potential")
    m = mu.values
    if form == "divergence":
        return signed_weighted_apply(grid, m**p.gamma, phi) / m
    if form != "expanded":
        raise InputError(f"unknown generator form {form!r}")
    dphi = grid.node_gradient(phi, closure="mirror")
    lap = grid.laplacian(phi)
    if p.branch == ONE:
        dlog = grid.node_gradient(np.log(m), closure="onesided")
        return sum(dlog[a] * dphi[a] for a in range(grid.dim)) + lap
    g = p.gamma
    dpow = grid.node_gradient(m ** (g - 1.0), closure="onesided")
    return g / (g - 1.0) * sum(dpow[a] * dphi[a] for a in range(grid.dim)) + m ** (g - 1.0) * lap


def forward_operator(rho: DensityField, mu: DensityField, gamma):
    """Kolmogorov forward operator ``div(mu^gamma grad(rho/mu))`` (linear in rho)."""
    grid = shared_grid(rho, mu)
    p = GammaParams.of(gamma)
    return weighted_apply(grid, mu.values**p.gamma, rho.values / mu.values)


def run_flow(rho0: DensityField, mu: DensityField, gamma, t_max, dt, *, record_every=0, tol=STEP_TOL):
    """Implicit-Euler integration of ``d rho/dt = L* rho`` up to ``t_max``.

    Each step solves ``(diag(mu) - dt div(mu^gamma grad)) u = rho_n`` and sets
    ``rho_{n+1} = rho_n + dt div(mu^gamma grad u)`` (so ``rho_{n+1} = mu u``
    up to solver tolerance, with mass conserved exactly).  ``D`` and ``I``
    are recorded at every step, including ``t = 0``.  ``record_every > 0``
    also keeps every k-th density.
    """
    grid = shared_grid(rho0, mu)
    p = GammaParams.of(gamma)
    dt = float(dt)
    t_max = float(t_max)
    if not (np.isfinite(dt) and dt > 0):
        raise InputError(f"dt must be positive, got {dt}")
    if not (np.isfinite(t_max) and t_max >= dt * (1 - 1e-12)):
        raise InputError(f"t_max must be at least dt, got t_max={t_max}, dt={dt}")
    nsteps = max(1, int(round(t_max / dt)))
    m = mu.values
    Wf = grid.face_mean(m**p.gamma)
    maxiter = 50 * max(grid.n)

    rho = np.array(rho0.values, dtype=float)
    mass0 = grid.integrate(rho)
    times = np.arange(nsteps + 1) * dt
    D = np.empty(nsteps + 1)
    I = np.empty(nsteps + 1)
    D[0] = divergence_gamma(rho0, mu, p)
    I[0] = fisher_gamma(rho0, mu, p)
    drift = abs(mass0 - 1.0)
    min_rho = float(np.min(rho))
    densities, dtimes = [], []
    if record_every:
        densities.append(rho.copy())
        dtimes.append(0.0)
    u = rho / m
    current = rho0
    for k in range(1, nsteps + 1):
        u, it, rel = kernels.pcg(grid, Wf, m, dt, rho, u, tol, maxiter, False)
        if not rel <= max(tol, 1e-10):
            raise SolverFailure(f"step {k}: implicit solve residual {rel:.3e} after {it} iterations")
        rho = rho + dt * kernels.wlap(grid, Wf, u)
        low = float(np.min(rho))
        min_rho = min(min_rho, low)
        if low < NEG_TOL:
            raise PositivityFailure(f"density reached {low:.3e}", step=k)
        drift = max(drift, abs(grid.integrate(rho) - 1.0))
        current = DensityField(grid, rho)
        D[k] = divergence_gamma(current, mu, p)
        I[k] = fisher_gamma(current, mu, p)
        if record_every and k % record_every == 0:
            densities.append(rho.copy())
            dtimes.append(times[k])
    return FlowTrace(
        times=times,
        divergence_series=D,
        fisher_series=I,
        mass_drift=float(drift),
        min_density=min_rho,
        gamma=p.gamma,
        dt=dt,
        densities=densities,
        density_times=dtimes,
        final=current,
    )


def window_indices(trace: FlowTrace, t0, t1):
    """Index range ``(i0, i1)`` (half open) of recorded times in ``[t0, t1]``."""
    t = np.asarray(trace.times)
    eps = 1e-9 * max(1.0, abs(t1))
    idx = np.nonzero((t >= t0 - eps) & (t <= t1 + eps))[0]
    if idx.size == 0:
        raise InputError(f"no recorded times in [{t0}, {t1}]")
    return int(idx[0]), int(idx[-1]) + 1


def estimate_decay_rate(trace, window=None) -> float:
    """Negated least-squares slope of ``log D`` against ``t`` over ``window``.

    ``trace`` is a :class:`FlowTrace` or a ``(times, values)`` pair;
    ``window`` is a half-open index range ``(i0, i1)``.
    """
    if isinstance(trace, FlowTrace):
        t, d = trace.times, trace.divergence_series
    else:
        t, d = trace
    t = np.asarray(t, dtype=float)
    d = np.asarray(d, dtype=float)
    i0, i1 = (0, len(t)) if window is None else window
    t, d = t[i0:i1], d[i0:i1]
    if len(t) < 5:
        raise InputError(f"decay window needs at least 5 points, got {len(t)}")
    if np.any(~(d > 0)):
        raise InputError("divergence must be positive on the decay window")
    tc = t - t.mean()
    y = np.log(d)
    slope = float(np.dot(tc, y - y.mean()) / np.dot(tc, tc))
    return -slope
