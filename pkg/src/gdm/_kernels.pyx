# cython: language_level=3
"""Compiled versions of the hot kernels (see ``_kernels_py`` for the reference).

Fields are passed as C-contiguous 2D arrays of shape ``(nx, ny)``; 1D grids
use ``ny == 1`` with ``dim == 1``.  All loops run without the GIL so the
shooting solver can evaluate Jacobian columns from a thread pool.
"""

import numpy as np
from libc.math cimport pow, fabs, sqrt, isfinite

cdef enum:
    STATUS_OK = 0
    STATUS_FLOOR = 1
    STATUS_BLOWUP = 2
    STATUS_FIXED_POINT = 3


cdef struct Geo:
    int nx
    int ny
    int dim
    int periodic
    double hx
    double hy


cdef inline void _grad(Geo g, const double[:, ::1] u, double[:, ::1] gx, double[:, ::1] gy) noexcept nogil:
    cdef int i, j, ip, jp
    for i in range(g.nx):
        ip = i + 1
        if ip == g.nx:
            ip = 0 if g.periodic else -1
        for j in range(g.ny):
            gx[i, j] = 0.0 if ip < 0 else (u[ip, j] - u[i, j]) / g.hx
    if g.dim == 2:
        for i in range(g.nx):
            for j in range(g.ny):
                jp = j + 1
                if jp == g.ny:
                    jp = 0 if g.periodic else -1
                gy[i, j] = 0.0 if jp < 0 else (u[i, jp] - u[i, j]) / g.hy


cdef inline void _div(Geo g, const double[:, ::1] fx, const double[:, ::1] fy, double[:, ::1] out) noexcept nogil:
    cdef int i, j, im, jm
    for i in range(g.nx):
        for j in range(g.ny):
            if g.periodic:
                im = i - 1 if i > 0 else g.nx - 1
                out[i, j] = (fx[i, j] - fx[im, j]) / g.hx
            elif i == 0:
                out[i, j] = 2.0 * fx[0, j] / g.hx
            elif i == g.nx - 1:
                out[i, j] = -2.0 * fx[g.nx - 2, j] / g.hx
            else:
                out[i, j] = (fx[i, j] - fx[i - 1, j]) / g.hx
    if g.dim == 2:
        for i in range(g.nx):
            for j in range(g.ny):
                if g.periodic:
                    jm = j - 1 if j > 0 else g.ny - 1
                    out[i, j] += (fy[i, j] - fy[i, jm]) / g.hy
                elif j == 0:
                    out[i, j] += 2.0 * fy[i, 0] / g.hy
                elif j == g.ny - 1:
                    out[i, j] += -2.0 * fy[i, g.ny - 2] / g.hy
                else:
                    out[i, j] += (fy[i, j] - fy[i, j - 1]) / g.hy


cdef inline void _face_mean(Geo g, const double[:, ::1] c, double[:, ::1] wx, double[:, ::1] wy) noexcept nogil:
    cdef int i, j, ip, jp
    for i in range(g.nx):
        ip = i + 1
        if ip == g.nx:
            ip = 0 if g.periodic else -1
        for j in range(g.ny):
            wx[i, j] = 0.0 if ip < 0 else 0.5 * (c[i, j] + c[ip, j])
    if g.dim == 2:
        for i in range(g.nx):
            for j in range(g.ny):
                jp = j + 1
                if jp == g.ny:
                    jp = 0 if g.periodic else -1
                wy[i, j] = 0.0 if jp < 0 else 0.5 * (c[i, j] + c[i, jp])


cdef inline void _face_sq(Geo g, const double[:, ::1] gx, const double[:, ::1] gy, double[:, ::1] out) noexcept nogil:
    """Node density of |grad|^2 for a staggered gradient (faces averaged onto nodes)."""
    cdef int i, j, im, jm
    for i in range(g.nx):
        for j in range(g.ny):
            if g.periodic:
                im = i - 1 if i > 0 else g.nx - 1
                out[i, j] = 0.5 * (gx[i, j] * gx[i, j] + gx[im, j] * gx[im, j])
            elif i == 0:
                out[i, j] = gx[0, j] * gx[0, j]
            elif i == g.nx - 1:
                out[i, j] = gx[g.nx - 2, j] * gx[g.nx - 2, j]
            else:
                out[i, j] = 0.5 * (gx[i, j] * gx[i, j] + gx[i - 1, j] * gx[i - 1, j])
    if g.dim == 2:
        for i in range(g.nx):
            for j in range(g.ny):
                if g.periodic:
                    jm = j - 1 if j > 0 else g.ny - 1
                    out[i, j] += 0.5 * (gy[i, j] * gy[i, j] + gy[i, jm] * gy[i, jm])
                elif j == 0:
                    out[i, j] += gy[i, 0] * gy[i, 0]
                elif j == g.ny - 1:
                    out[i, j] += gy[i, g.ny - 2] * gy[i, g.ny - 2]
                else:
                    out[i, j] += 0.5 * (gy[i, j] * gy[i, j] + gy[i, j - 1] * gy[i, j - 1])


cdef inline void _wlap(Geo g, const double[:, ::1] wx, const double[:, ::1] wy, const double[:, ::1] u,
                       double[:, ::1] gx, double[:, ::1] gy, double[:, ::1] out) noexcept nogil:
    cdef int i, j
    _grad(g, u, gx, gy)
    for i in range(g.nx):
        for j in range(g.ny):
            gx[i, j] *= wx[i, j]
    if g.dim == 2:
        for i in range(g.nx):
            for j in range(g.ny):
                gy[i, j] *= wy[i, j]
    _div(g, gx, gy, out)


cdef inline double _wdot(Geo g, const double[:, ::1] w, const double[:, ::1] a, const double[:, ::1] b) noexcept nogil:
    cdef int i, j
    cdef double s = 0.0
    for i in range(g.nx):
        for j in range(g.ny):
            s += w[i, j] * a[i, j] * b[i, j]
    return s


cdef inline void _project(Geo g, const double[:, ::1] w, double wsum, double[:, ::1] v) noexcept nogil:
    cdef int i, j
    cdef double s = 0.0
    for i in range(g.nx):
        for j in range(g.ny):
            s += w[i, j] * v[i, j]
    s /= wsum
    for i in range(g.nx):
        for j in range(g.ny):
            v[i, j] -= s


cdef Geo _geo(int nx, int ny, int dim, bint periodic, double hx, double hy):
    cdef Geo g
    g.nx = nx
    g.ny = ny
    g.dim = dim
    g.periodic = periodic
    g.hx = hx
    g.hy = hy
    return g


def wlap(int dim, bint periodic, double hx, double hy,
         const double[:, ::1] wx, const double[:, ::1] wy, const double[:, ::1] u):
    cdef Geo g = _geo(u.shape[0], u.shape[1], dim, periodic, hx, hy)
    out = np.empty((g.nx, g.ny))
    gx = np.empty((g.nx, g.ny))
    gy = np.empty((g.nx, g.ny))
    cdef double[:, ::1] o = out, a = gx, b = gy
    with nogil:
        _wlap(g, wx, wy, u, a, b, o)
    return out


def pcg(int dim, bint periodic, double hx, double hy,
        const double[:, ::1] wx, const double[:, ::1] wy, const double[:, ::1] m, double c,
        const double[:, ::1] b, const double[:, ::1] x0, const double[:, ::1] w,
        const double[:, ::1] diag, double tol, int maxiter, bint project):
    cdef Geo g = _geo(b.shape[0], b.shape[1], dim, periodic, hx, hy)
    cdef int nx = g.nx, ny = g.ny, i, j, it = 0
    x_arr = np.array(x0, dtype=float, copy=True)
    r_arr = np.empty((nx, ny))
    z_arr = np.empty((nx, ny))
    p_arr = np.empty((nx, ny))
    ap_arr = np.empty((nx, ny))
    gx_arr = np.empty((nx, ny))
    gy_arr = np.empty((nx, ny))
    cdef double[:, ::1] x = x_arr, r = r_arr, z = z_arr, p = p_arr, ap = ap_arr, gx = gx_arr, gy = gy_arr
    cdef double wsum = 0.0, bnorm, rz, rz_new, pap, alpha, beta, rel = 0.0
    with nogil:
        for i in range(nx):
            for j in range(ny):
                wsum += w[i, j]
        bnorm = sqrt(_wdot(g, w, b, b))
        if project:
            _project(g, w, wsum, x)
        if bnorm == 0.0:
            for i in range(nx):
                for j in range(ny):
                    x[i, j] = 0.0
        else:
            _wlap(g, wx, wy, x, gx, gy, ap)
            for i in range(nx):
                for j in range(ny):
                    r[i, j] = b[i, j] - (m[i, j] * x[i, j] - c * ap[i, j])
            if project:
                _project(g, w, wsum, r)
            for i in range(nx):
                for j in range(ny):
                    z[i, j] = r[i, j] / diag[i, j]
            if project:
                _project(g, w, wsum, z)
            for i in range(nx):
                for j in range(ny):
                    p[i, j] = z[i, j]
            rz = _wdot(g, w, r, z)
            rel = sqrt(_wdot(g, w, r, r)) / bnorm
            while rel > tol and it < maxiter:
                _wlap(g, wx, wy, p, gx, gy, ap)
                for i in range(nx):
                    for j in range(ny):
                        ap[i, j] = m[i, j] * p[i, j] - c * ap[i, j]
                pap = _wdot(g, w, p, ap)
                if pap <= 0.0:
                    break
                alpha = rz / pap
                for i in range(nx):
                    for j in range(ny):
                        x[i, j] += alpha * p[i, j]
                        r[i, j] -= alpha * ap[i, j]
                if project:
                    _project(g, w, wsum, r)
                it += 1
                rel = sqrt(_wdot(g, w, r, r)) / bnorm
                if rel <= tol:
                    break
                for i in range(nx):
                    for j in range(ny):
                        z[i, j] = r[i, j] / diag[i, j]
                if project:
                    _project(g, w, wsum, z)
                rz_new = _wdot(g, w, r, z)
                beta = rz_new / rz
                rz = rz_new
                for i in range(nx):
                    for j in range(ny):
                        p[i, j] = z[i, j] + beta * p[i, j]
            if project:
                _project(g, w, wsum, x)
            _wlap(g, wx, wy, x, gx, gy, ap)
            for i in range(nx):
                for j in range(ny):
                    r[i, j] = b[i, j] - (m[i, j] * x[i, j] - c * ap[i, j])
            if project:
                _project(g, w, wsum, r)
            rel = sqrt(_wdot(g, w, r, r)) / bnorm
    return x_arr, it, rel


cdef inline double _maxabs(Geo g, const double[:, ::1] a) noexcept nogil:
    cdef int i, j
    cdef double s = 0.0, v
    for i in range(g.nx):
        for j in range(g.ny):
            v = fabs(a[i, j])
            if not (v <= s):  # also propagates NaN
                s = v
    return s


cdef int _a_step(Geo g, double gamma, double floor, double tau, double fp_tol, int fp_maxit,
                 const double[:, ::1] rho, double[:, ::1] phi,
                 double[:, ::1] pw, double[:, ::1] x1, double[:, ::1] mid, double[:, ::1] xn,
                 double[:, ::1] gx, double[:, ::1] gy, double[:, ::1] sq) noexcept nogil:
    """Implicit-midpoint step of dPhi/dt = -(gamma/2) rho^(gamma-1) |grad Phi|^2, rho frozen."""
    cdef int i, j, k
    cdef double half = 0.5 * gamma, diff, v, scale
    if gamma == 0.0:
        return 1
    for i in range(g.nx):
        for j in range(g.ny):
            v = rho[i, j]
            if v < floor:
                v = floor
            pw[i, j] = pow(v, gamma - 1.0)
    _grad(g, phi, gx, gy)
    _face_sq(g, gx, gy, sq)
    for i in range(g.nx):
        for j in range(g.ny):
            x1[i, j] = phi[i, j] - tau * half * pw[i, j] * sq[i, j]
    for k in range(fp_maxit):
        for i in range(g.nx):
            for j in range(g.ny):
                mid[i, j] = 0.5 * (phi[i, j] + x1[i, j])
        _grad(g, mid, gx, gy)
        _face_sq(g, gx, gy, sq)
        diff = 0.0
        for i in range(g.nx):
            for j in range(g.ny):
                xn[i, j] = phi[i, j] - tau * half * pw[i, j] * sq[i, j]
                v = fabs(xn[i, j] - x1[i, j])
                if not (v <= diff):
                    diff = v
                x1[i, j] = xn[i, j]
        if not isfinite(diff):
            break
        scale = _maxabs(g, x1)
        if scale < 1.0:
            scale = 1.0
        if diff <= fp_tol * scale:
            for i in range(g.nx):
                for j in range(g.ny):
                    phi[i, j] = x1[i, j]
            return 1
    for i in range(g.nx):
        for j in range(g.ny):
            phi[i, j] = x1[i, j]
    return 0


cdef int _b_step(Geo g, double gamma, double floor, double tau, double fp_tol, int fp_maxit,
                 double[:, ::1] rho, const double[:, ::1] phi,
                 double[:, ::1] x1, double[:, ::1] mid, double[:, ::1] xn,
                 double[:, ::1] gx, double[:, ::1] gy, double[:, ::1] wx, double[:, ::1] wy,
                 double[:, ::1] fx, double[:, ::1] fy, double[:, ::1] dv) noexcept nogil:
    """Implicit-midpoint step of drho/dt = -div(rho^gamma grad Phi), Phi frozen."""
    cdef int i, j, k
    cdef double diff, v, scale
    _grad(g, phi, gx, gy)

    # explicit predictor
    for i in range(g.nx):
        for j in range(g.ny):
            v = rho[i, j]
            if v < floor:
                v = floor
            mid[i, j] = pow(v, gamma)
    _face_mean(g, mid, wx, wy)
    for i in range(g.nx):
        for j in range(g.ny):
            fx[i, j] = wx[i, j] * gx[i, j]
            if g.dim == 2:
                fy[i, j] = wy[i, j] * gy[i, j]
    _div(g, fx, fy, dv)
    for i in range(g.nx):
        for j in range(g.ny):
            x1[i, j] = rho[i, j] - tau * dv[i, j]
    for k in range(fp_maxit):
        for i in range(g.nx):
            for j in range(g.ny):
                v = 0.5 * (rho[i, j] + x1[i, j])
                if v < floor:
                    v = floor
                mid[i, j] = pow(v, gamma)
        _face_mean(g, mid, wx, wy)
        for i in range(g.nx):
            for j in range(g.ny):
                fx[i, j] = wx[i, j] * gx[i, j]
                if g.dim == 2:
                    fy[i, j] = wy[i, j] * gy[i, j]
        _div(g, fx, fy, dv)
        diff = 0.0
        for i in range(g.nx):
            for j in range(g.ny):
                xn[i, j] = rho[i, j] - tau * dv[i, j]
                v = fabs(xn[i, j] - x1[i, j])
                if not (v <= diff):
                    diff = v
                x1[i, j] = xn[i, j]
        if not isfinite(diff):
            break
        scale = _maxabs(g, x1)
        if scale < 1.0:
            scale = 1.0
        if diff <= fp_tol * scale:
            for i in range(g.nx):
                for j in range(g.ny):
                    rho[i, j] = x1[i, j]
            return 1
    for i in range(g.nx):
        for j in range(g.ny):
            rho[i, j] = x1[i, j]
    return 0


def cogeodesic(int dim, bint periodic, double hx, double hy, const double[:, ::1] w,
               const double[:, ::1] rho0, const double[:, ::1] phi0, double gamma, double dt,
               int steps, int record_every, double floor, double fp_tol, int fp_maxit):
    cdef Geo g = _geo(rho0.shape[0], rho0.shape[1], dim, periodic, hx, hy)
    cdef int nx = g.nx, ny = g.ny, nrec = steps // record_every + 1
    rhos_arr = np.empty((nrec, nx, ny))
    phis_arr = np.empty((nrec, nx, ny))
    rho_arr = np.array(rho0, dtype=float, copy=True)
    phi_arr = np.array(phi0, dtype=float, copy=True)
    work = np.empty((13, nx, ny))
    cdef double[:, :, ::1] rhos = rhos_arr, phis = phis_arr, wk = work
    cdef double[:, ::1] rho = rho_arr, phi = phi_arr
    cdef int s, i, j, k = 1, ok, status = STATUS_OK, failed = -1
    cdef double wsum = 0.0, mx
    with nogil:
        for i in range(nx):
            for j in range(ny):
                wsum += w[i, j]
        _project(g, w, wsum, phi)
        rhos[0, :, :] = rho
        phis[0, :, :] = phi
        for s in range(1, steps + 1):
            ok = _a_step(g, gamma, floor, 0.5 * dt, fp_tol, fp_maxit, rho, phi,
                         wk[0], wk[1], wk[2], wk[3], wk[4], wk[5], wk[6])
            ok = _b_step(g, gamma, floor, dt, fp_tol, fp_maxit, rho, phi,
                         wk[1], wk[2], wk[3], wk[4], wk[5], wk[7], wk[8], wk[9], wk[10], wk[11]) and ok
            ok = _a_step(g, gamma, floor, 0.5 * dt, fp_tol, fp_maxit, rho, phi,
                         wk[0], wk[1], wk[2], wk[3], wk[4], wk[5], wk[6]) and ok
            _project(g, w, wsum, phi)
            mx = _maxabs(g, rho)
            if _maxabs(g, phi) > mx:
                mx = _maxabs(g, phi)
            if not ok:
                status = STATUS_FIXED_POINT if isfinite(mx) else STATUS_BLOWUP
                failed = s
                break
            if not (mx <= 1e12):
                status = STATUS_BLOWUP
                failed = s
                break
            for i in range(nx):
                for j in range(ny):
                    if rho[i, j] < floor:
                        status = STATUS_FLOOR
                        failed = s
            if status != STATUS_OK:
                break
            if s % record_every == 0:
                rhos[k, :, :] = rho
                phis[k, :, :] = phi
                k += 1
    if status != STATUS_OK:
        return rhos_arr[:k], phis_arr[:k], status, failed
    return rhos_arr, phis_arr, status, failed
