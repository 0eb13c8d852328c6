"""Pure numpy implementations of the hot kernels.

These are the reference versions; the compiled extension must agree with
them to rounding.  All functions take the owning :class:`~gdm.grid.Grid`.
"""

import numpy as np

STATUS_OK = 0
STATUS_FLOOR = 1
STATUS_BLOWUP = 2
STATUS_FIXED_POINT = 3

BLOWUP = 1e12


def wlap(grid, Wf, u):
    """``div(Wf * grad u)`` with face coefficients ``Wf`` of shape ``(dim, *shape)``."""
    return grid.divergence(Wf * grid.gradient(u))


def _op_diag(grid, Wf, m, c):
    d = np.array(m, dtype=float, copy=True)
    for a in range(grid.dim):
        h2 = grid.h[a] ** 2
        W = Wf[a]
        if grid.periodic:
            d += c * (W + np.roll(W, 1, axis=a)) / h2
        else:
            left = np.zeros_like(W)
            idx_dst = [slice(None)] * grid.dim
            idx_src = [slice(None)] * grid.dim
            idx_dst[a] = slice(1, None)
            idx_src[a] = slice(0, -1)
            left[tuple(idx_dst)] = W[tuple(idx_src)]
            first = [slice(None)] * grid.dim
            last = [slice(None)] * grid.dim
            first[a] = 0
            last[a] = -1
            s = W + left
            s[tuple(first)] = 2.0 * W[tuple(first)]
            pen = [slice(None)] * grid.dim
            pen[a] = -2
            s[tuple(last)] = 2.0 * W[tuple(pen)]
            d += c * s / h2
    return d


def pcg(grid, Wf, m, c, b, x0, tol, maxiter, project):
    """Solve ``(diag(m) - c div(Wf grad)) u = b`` by Jacobi-preconditioned CG.

    Inner products use the quadrature weights, in which the operator is
    symmetric.  With ``project`` the iterates are kept in the subspace
    ``sum(w * u) == 0`` (needed when ``m == 0``).
    Returns ``(u, iterations, relative_residual)``.
    """
    w = grid.weights
    wsum = float(np.sum(w))

    def P(v):
        return v - np.sum(w * v) / wsum if project else v

    def A(v):
        return m * v - c * wlap(grid, Wf, v)

    def dot(a, b_):
        return float(np.sum(w * a * b_))

    bnorm = np.sqrt(dot(b, b))
    x = P(np.array(x0, dtype=float, copy=True))
    if bnorm == 0.0:
        return np.zeros_like(x), 0, 0.0
    dinv = 1.0 / _op_diag(grid, Wf, m, c)
    r = P(b - A(x))
    z = P(dinv * r)
    p = z.copy()
    rz = dot(r, z)
    it = 0
    rel = np.sqrt(dot(r, r)) / bnorm
    while rel > tol and it < maxiter:
        Ap = A(p)
        pAp = dot(p, Ap)
        if pAp <= 0.0:
            break
        alpha = rz / pAp
        x += alpha * p
        r = P(r - alpha * Ap)
        it += 1
        rel = np.sqrt(dot(r, r)) / bnorm
        if rel <= tol:
            break
        z = P(dinv * r)
        rz_new = dot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    x = P(x)
    rt = P(b - A(x))
    return x, it, float(np.sqrt(dot(rt, rt)) / bnorm)


def _midpoint(x0, rhs, dt, tol, maxit):
    """Implicit midpoint ``x1 = x0 + dt * rhs((x0 + x1)/2)`` by fixed-point iteration."""
    x1 = x0 + dt * rhs(x0)
    for _ in range(maxit):
        x_new = x0 + dt * rhs(0.5 * (x0 + x1))
        diff = np.max(np.abs(x_new - x1))
        x1 = x_new
        if not np.isfinite(diff):
            return x1, False
        if diff <= tol * max(1.0, float(np.max(np.abs(x1)))):
            return x1, True
    return x1, False


def cogeodesic(grid, rho0, phi0, gamma, dt, steps, record_every, floor, fp_tol, fp_maxit):
    """Strang-split implicit-midpoint integration of the co-geodesic system.

    Returns ``(rhos, phis, status, failed_step)`` with snapshots at every
    ``record_every`` steps (including step 0).
    """
    w = grid.weights
    wsum = float(np.sum(w))
    rho = np.array(rho0, dtype=float, copy=True)
    phi = np.array(phi0, dtype=float, copy=True)
    phi -= np.sum(w * phi) / wsum
    nrec = steps // record_every + 1
    rhos = np.empty((nrec,) + grid.shape)
    phis = np.empty((nrec,) + grid.shape)
    rhos[0], phis[0] = rho, phi
    half = 0.5 * gamma

    def a_step(phi, rho, tau):
        if gamma == 0.0:
            return phi, True
        pw = np.maximum(rho, floor) ** (gamma - 1.0)

        def F(p):
            g = grid.gradient(p)
            return -half * pw * grid.face_inner(g, g)

        return _midpoint(phi, F, tau, fp_tol, fp_maxit)

    def b_step(rho, phi, tau):
        g = grid.gradient(phi)

        def G(r):
            Wf = grid.face_mean(np.maximum(r, floor) ** gamma)
            return -grid.divergence(Wf * g)

        return _midpoint(rho, G, tau, fp_tol, fp_maxit)

    k = 1
    for s in range(1, steps + 1):
        phi, ok1 = a_step(phi, rho, 0.5 * dt)
        rho, ok2 = b_step(rho, phi, dt)
        phi, ok3 = a_step(phi, rho, 0.5 * dt)
        phi -= np.sum(w * phi) / wsum
        if not (ok1 and ok2 and ok3):
            if not (np.all(np.isfinite(rho)) and np.all(np.isfinite(phi))):
                return rhos[:k], phis[:k], STATUS_BLOWUP, s
            return rhos[:k], phis[:k], STATUS_FIXED_POINT, s
        if np.max(np.abs(rho)) > BLOWUP or np.max(np.abs(phi)) > BLOWUP:
            return rhos[:k], phis[:k], STATUS_BLOWUP, s
        if np.min(rho) < floor:
            return rhos[:k], phis[:k], STATUS_FLOOR, s
        if s % record_every == 0:
            rhos[k], phis[k] = rho, phi
            k += 1
    return rhos, phis, STATUS_OK, -1
