"""Backend selection for the hot kernels.

The compiled extension ``gdm._kernels`` is used when it imports; otherwise
(or when ``GDM_PURE_PYTHON=1`` is set) the numpy reference implementation in
``gdm._kernels_py`` is used.  ``BACKEND`` names the active choice and
:func:`use_backend` switches at runtime (tests and the benchmark use it).
"""

import os

import numpy as np

from . import _kernels_py as _py
from .errors import InputError

try:  # pragma: no cover - depends on the build
    from . import _kernels as _cy
except ImportError:  # pragma: no cover
    _cy = None

STATUS_OK = _py.STATUS_OK
STATUS_FLOOR = _py.STATUS_FLOOR
STATUS_BLOWUP = _py.STATUS_BLOWUP
STATUS_FIXED_POINT = _py.STATUS_FIXED_POINT

HAVE_COMPILED = _cy is not None
BACKEND = "cython" if HAVE_COMPILED and os.environ.get("GDM_PURE_PYTHON", "") in ("", "0") else "python"


def use_backend(name):
    """Select ``"cython"`` or ``"python"``; returns the previous backend name."""
    global BACKEND
    if name not in ("cython", "python"):
        raise InputError(f"unknown backend {name!r}")
    if name == "cython" and not HAVE_COMPILED:
        raise InputError("compiled kernels are not available in this build")
    previous, BACKEND = BACKEND, name
    return previous


def _as2d(grid, a):
    a = np.ascontiguousarray(a, dtype=float)
    return a.reshape(grid.shape[0], 1) if grid.dim == 1 else a


def _geo(grid):
    hy = grid.h[1] if grid.dim == 2 else 1.0
    return grid.dim, grid.periodic, grid.h[0], hy


def _faces(grid, Wf):
    wx = _as2d(grid, Wf[0])
    wy = _as2d(grid, Wf[1]) if grid.dim == 2 else wx
    return wx, wy


def wlap(grid, Wf, u):
    """``div(Wf * grad u)`` for face coefficients ``Wf``."""
    if BACKEND == "python":
        return _py.wlap(grid, Wf, u)
    wx, wy = _faces(grid, Wf)
    out = _cy.wlap(*_geo(grid), wx, wy, _as2d(grid, u))
    return out.reshape(grid.shape)


def operator_diagonal(grid, Wf, m, c):
    return _py._op_diag(grid, Wf, m, c)


def pcg(grid, Wf, m, c, b, x0, tol, maxiter, project):
    """Jacobi-preconditioned CG for ``(diag(m) - c div(Wf grad)) u = b``."""
    if BACKEND == "python":
        return _py.pcg(grid, Wf, m, c, b, x0, tol, maxiter, project)
    wx, wy = _faces(grid, Wf)
    m = np.broadcast_to(np.asarray(m, dtype=float), grid.shape)
    diag = operator_diagonal(grid, Wf, m, c)
    x, it, rel = _cy.pcg(
        *_geo(grid), wx, wy, _as2d(grid, m), float(c), _as2d(grid, b), _as2d(grid, x0),
        _as2d(grid, grid.weights), _as2d(grid, diag), float(tol), int(maxiter), bool(project),
    )
    return x.reshape(grid.shape), int(it), float(rel)


def cogeodesic(grid, rho0, phi0, gamma, dt, steps, record_every, floor, fp_tol, fp_maxit):
    """Strang-split co-geodesic integration; see ``_kernels_py.cogeodesic``."""
    if BACKEND == "python":
        return _py.cogeodesic(grid, rho0, phi0, gamma, dt, steps, record_every, floor, fp_tol, fp_maxit)
    dim, periodic, hx, hy = _geo(grid)
    rhos, phis, status, failed = _cy.cogeodesic(
        dim, periodic, hx, hy, _as2d(grid, grid.weights), _as2d(grid, rho0), _as2d(grid, phi0),
        float(gamma), float(dt), int(steps), int(record_every), float(floor), float(fp_tol), int(fp_maxit),
    )
    k = rhos.shape[0]
    return rhos.reshape((k,) + grid.shape), phis.reshape((k,) + grid.shape), int(status), int(failed)
