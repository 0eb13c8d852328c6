"""Flat 1D/2D grids with matched finite-volume stencils and quadrature.

Scalar fields are arrays of shape ``grid.shape``.  Vector fields have shape
``(dim, *grid.shape)``; component ``a`` of a *gradient* is staggered: entry
``i`` along axis ``a`` holds the forward difference located at the face
``x_i + h_a/2``.  On reflecting axes the last face entry is the (zero-flux)
boundary and is always zero.  Symmetric matrix fields have shape
``(dim*(dim+1)//2, *grid.shape)`` with component order ``xx`` (1D) or
``xx, xy, yy`` (2D).

The stencils are chosen so that discrete integration by parts is exact:

* ``divergence`` is the negative adjoint of ``gradient`` under the
  quadrature weights (trapezoid nodes, midpoint faces);
* ``laplacian`` is literally ``divergence(gradient(f))``;
* the reflecting closure is the ghost-point mirror ``f[-1] = f[1]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import InputError

PERIODIC = "periodic"
REFLECTING = "reflecting"
TOPOLOGIES = (PERIODIC, REFLECTING)
MIN_NODES = 16


def _tuple(value, dim, cast):
    if np.ndim(value) == 0:
        return tuple(cast(value) for _ in range(dim))
    value = tuple(cast(v) for v in value)
    if len(value) != dim:
        raise InputError(f"expected {dim} per-axis values, got {len(value)}")
    return value


def _readonly(a):
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


def _sl(ndim, axis, s):
    idx = [slice(None)] * ndim
    idx[axis] = s
    return tuple(idx)


@dataclass(frozen=True, eq=False)
class Grid:
    dim: int
    topology: str
    extent: tuple
    n: tuple
    origin: tuple
    h: tuple = field(init=False)
    shape: tuple = field(init=False)
    weights: np.ndarray = field(init=False, repr=False)
    face_weights: np.ndarray = field(init=False, repr=False)
    axes: tuple = field(init=False, repr=False)

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise InputError(f"dim must be 1 or 2, got {self.dim}")
        if self.topology not in TOPOLOGIES:
            raise InputError(f"unknown topology {self.topology!r}")
        if any(m < MIN_NODES for m in self.n):
            raise InputError(f"need at least {MIN_NODES} nodes per axis, got {self.n}")
        if any(not np.isfinite(L) or L <= 0 for L in self.extent):
            raise InputError(f"extent must be positive, got {self.extent}")
        periodic = self.topology == PERIODIC
        h = tuple(L / m if periodic else L / (m - 1) for L, m in zip(self.extent, self.n))
        set_ = object.__setattr__
        set_(self, "h", h)
        set_(self, "shape", tuple(self.n))
        axes, w1 = [], []
        for a in range(self.dim):
            x = self.origin[a] + h[a] * np.arange(self.n[a])
            axes.append(_readonly(x))
            w = np.full(self.n[a], h[a])
            if not periodic:
                w[0] = w[-1] = 0.5 * h[a]
            w1.append(w)
        set_(self, "axes", tuple(axes))
        weights = w1[0] if self.dim == 1 else np.outer(w1[0], w1[1])
        set_(self, "weights", _readonly(weights))
        faces = np.empty((self.dim,) + self.shape)
        for a in range(self.dim):
            fw = np.full(self.n[a], h[a])
            if not periodic:
                fw[-1] = 0.0
            if self.dim == 1:
                faces[a] = fw
            else:
                faces[a] = np.outer(fw, w1[1]) if a == 0 else np.outer(w1[0], fw)
        set_(self, "face_weights", _readonly(faces))

    # ------------------------------------------------------------------ basics
    @property
    def periodic(self) -> bool:
        return self.topology == PERIODIC

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def volume(self) -> float:
        return float(np.prod(self.extent))

    @property
    def n_sym(self) -> int:
        return self.dim * (self.dim + 1) // 2

    def coords(self):
        """Node coordinates as a tuple of broadcast arrays of ``self.shape``."""
        if self.dim == 1:
            return (self.axes[0],)
        return tuple(np.meshgrid(*self.axes, indexing="ij"))

    def face_coords(self, axis):
        """Coordinates of the staggered faces carrying gradient component ``axis``."""
        shifted = list(self.axes)
        shifted[axis] = self.axes[axis] + 0.5 * self.h[axis]
        if self.dim == 1:
            return (shifted[0],)
        return tuple(np.meshgrid(*shifted, indexing="ij"))

    def ricci(self):
        """Ricci curvature of the flat domain: identically zero."""
        return np.zeros((self.n_sym,) + self.shape)

    def descriptor(self) -> dict:
        return {
            "dim": self.dim,
            "topology": self.topology,
            "extent": list(self.extent),
            "n": list(self.n),
            "origin": list(self.origin),
        }

    def same_as(self, other) -> bool:
        return other is self or (
            isinstance(other, Grid)
            and self.dim == other.dim
            and self.topology == other.topology
            and self.n == other.n
            and np.allclose(self.extent, other.extent, rtol=0, atol=0)
            and np.allclose(self.origin, other.origin, rtol=0, atol=0)
        )

    # ----------------------------------------------------------------- checks
    def check_scalar(self, f, name="field"):
        f = np.asarray(f, dtype=float)
        if f.shape != self.shape:
            raise InputError(f"{name} has shape {f.shape}, grid expects {self.shape}")
        return f

    def check_vector(self, v, name="vector field"):
        v = np.asarray(v, dtype=float)
        if v.shape != (self.dim,) + self.shape:
            raise InputError(f"{name} has shape {v.shape}, grid expects {(self.dim,) + self.shape}")
        return v

    def is_vector(self, f) -> bool:
        return np.ndim(f) == self.dim + 1

    # -------------------------------------------------------------- stencils
    def _diff(self, f, axis):
        h = self.h[axis]
        if self.periodic:
            return (np.roll(f, -1, axis=axis) - f) / h
        out = np.zeros_like(f)
        nd = f.ndim
        out[_sl(nd, axis, slice(0, -1))] = (
            f[_sl(nd, axis, slice(1, None))] - f[_sl(nd, axis, slice(0, -1))]
        ) / h
        return out

    def _div(self, F, axis):
        h = self.h[axis]
        if self.periodic:
            return (F - np.roll(F, 1, axis=axis)) / h
        nd = F.ndim
        out = np.empty_like(F)
        out[_sl(nd, axis, slice(1, -1))] = (
            F[_sl(nd, axis, slice(1, -1))] - F[_sl(nd, axis, slice(0, -2))]
        ) / h
        out[_sl(nd, axis, 0)] = 2.0 * F[_sl(nd, axis, 0)] / h
        out[_sl(nd, axis, -1)] = -2.0 * F[_sl(nd, axis, -2)] / h
        return out

    def _face_to_node(self, P, axis):
        """Average a face-located quantity onto nodes (mirror-even at walls)."""
        if self.periodic:
            return 0.5 * (P + np.roll(P, 1, axis=axis))
        nd = P.ndim
        out = np.empty_like(P)
        out[_sl(nd, axis, slice(1, -1))] = 0.5 * (
            P[_sl(nd, axis, slice(1, -1))] + P[_sl(nd, axis, slice(0, -2))]
        )
        out[_sl(nd, axis, 0)] = P[_sl(nd, axis, 0)]
        out[_sl(nd, axis, -1)] = P[_sl(nd, axis, -2)]
        return out

    def _node_to_face(self, f, axis):
        """Arithmetic mean of node values onto faces (dummy wall face is 0)."""
        if self.periodic:
            return 0.5 * (f + np.roll(f, -1, axis=axis))
        nd = f.ndim
        out = np.zeros_like(f)
        out[_sl(nd, axis, slice(0, -1))] = 0.5 * (
            f[_sl(nd, axis, slice(0, -1))] + f[_sl(nd, axis, slice(1, None))]
        )
        return out

    def _central(self, f, axis, closure):
        h = self.h[axis]
        if self.periodic:
            return (np.roll(f, -1, axis=axis) - np.roll(f, 1, axis=axis)) / (2 * h)
        nd = f.ndim
        out = np.empty_like(f)
        out[_sl(nd, axis, slice(1, -1))] = (
            f[_sl(nd, axis, slice(2, None))] - f[_sl(nd, axis, slice(0, -2))]
        ) / (2 * h)
        if closure == "mirror":
            out[_sl(nd, axis, 0)] = 0.0
            out[_sl(nd, axis, -1)] = 0.0
        else:
            g = lambda i: f[_sl(nd, axis, i)]  # noqa: E731
            out[_sl(nd, axis, 0)] = (-3 * g(0) + 4 * g(1) - g(2)) / (2 * h)
            out[_sl(nd, axis, -1)] = (3 * g(-1) - 4 * g(-2) + g(-3)) / (2 * h)
        return out

    def _second(self, f, axis, closure):
        d2 = self._div(self._diff(f, axis), axis)
        if closure == "onesided" and not self.periodic:
            h2 = self.h[axis] ** 2
            nd = f.ndim
            g = lambda i: f[_sl(nd, axis, i)]  # noqa: E731
            d2[_sl(nd, axis, 0)] = (2 * g(0) - 5 * g(1) + 4 * g(2) - g(3)) / h2
            d2[_sl(nd, axis, -1)] = (2 * g(-1) - 5 * g(-2) + 4 * g(-3) - g(-4)) / h2
        return d2

    @staticmethod
    def _check_closure(closure):
        if closure not in ("mirror", "onesided"):
            raise InputError(f"unknown closure {closure!r}")

    # ------------------------------------------------------------ operators
    def gradient(self, f):
        """Staggered gradient: second-order central difference at each face."""
        f = self.check_scalar(f)
        return np.stack([self._diff(f, a) for a in range(self.dim)])

    def divergence(self, v):
        """Discrete divergence, the negative adjoint of :meth:`gradient`."""
        v = self.check_vector(v)
        out = self._div(v[0], 0)
        for a in range(1, self.dim):
            out = out + self._div(v[a], a)
        return out

    def laplacian(self, f):
        return self.divergence(self.gradient(f))

    def node_gradient(self, f, closure="mirror"):
        """Node-centred gradient ``(f[i+1] - f[i-1]) / 2h``.

        ``closure="mirror"`` assumes a zero normal derivative on reflecting
        walls; ``closure="onesided"`` uses second-order one-sided stencils there
        and is meant for coefficient fields (functions of the reference
        density) that do not satisfy the Neumann condition.
        """
        self._check_closure(closure)
        f = self.check_scalar(f)
        return np.stack([self._central(f, a, closure) for a in range(self.dim)])

    def hessian_field(self, f, closure="mirror"):
        """Symmetric Hessian; diagonal entries are the compact second differences.

        With the mirror closure the trace equals :meth:`laplacian` bit for bit.
        """
        self._check_closure(closure)
        f = self.check_scalar(f)
        if self.dim == 1:
            return self._second(f, 0, closure)[None]
        xx = self._second(f, 0, closure)
        yy = self._second(f, 1, closure)
        xy = self._central(self._central(f, 1, closure), 0, closure)
        return np.stack([xx, xy, yy])

    def face_inner(self, u, v):
        """Node field ``(u, v)`` for two staggered vector fields.

        Face products are averaged onto nodes, so that
        ``integrate(face_inner(u, v) * c) == sum(face_mean(c) * u * v * face_weights)``
        exactly.  This is the node density of the energy ``int c (u, v) dx``.
        """
        u = self.check_vector(u)
        v = self.check_vector(v)
        out = self._face_to_node(u[0] * v[0], 0)
        for a in range(1, self.dim):
            out = out + self._face_to_node(u[a] * v[a], a)
        return out

    def face_mean(self, c):
        """Arithmetic face averages of a node field, one array per axis."""
        c = self.check_scalar(c)
        return np.stack([self._node_to_face(c, a) for a in range(self.dim)])

    def weighted_divergence(self, c, f):
        """``div(face_mean(c) * grad f)`` with no sign restriction on ``c``."""
        c = self.check_scalar(c)
        g = self.gradient(f)
        return self.divergence(self.face_mean(c) * g)

    # ------------------------------------------------------------ quadrature
    def integrate(self, f):
        f = self.check_scalar(f)
        return float(np.sum(self.weights * f))

    def mean(self, f):
        return self.integrate(f) / self.volume

    def l2_inner(self, f, g):
        """Quadrature inner product of two scalar or two staggered vector fields."""
        f = np.asarray(f, dtype=float)
        g = np.asarray(g, dtype=float)
        if f.shape != g.shape:
            raise InputError(f"shape mismatch {f.shape} vs {g.shape}")
        if self.is_vector(f):
            self.check_vector(f)
            return float(np.sum(self.face_weights * f * g))
        self.check_scalar(f)
        return float(np.sum(self.weights * f * g))

    def l2_norm(self, f):
        return float(np.sqrt(max(self.l2_inner(f, f), 0.0)))

    def remove_mean(self, f):
        return np.asarray(f, dtype=float) - self.mean(f)


# ------------------------------------------------------------ module helpers
def build_grid(config: Mapping | None = None, **kwargs) -> Grid:
    """Build a :class:`Grid` from a descriptor mapping and/or keywords.

    Recognised keys: ``dim`` (1 or 2), ``topology`` (``"periodic"`` or
    ``"reflecting"``), ``extent`` (scalar or per axis), ``n`` (scalar or per
    axis, at least 16) and ``origin`` (defaults to 0).
    """
    cfg = dict(config or {})
    cfg.update(kwargs)
    unknown = set(cfg) - {"dim", "topology", "extent", "n", "origin"}
    if unknown:
        raise InputError(f"unknown grid keys {sorted(unknown)}")
    try:
        dim = int(cfg.get("dim", 1))
    except (TypeError, ValueError) as exc:
        raise InputError(f"bad dim {cfg.get('dim')!r}") from exc
    if dim not in (1, 2):
        raise InputError(f"dim must be 1 or 2, got {dim}")
    try:
        extent = _tuple(cfg.get("extent", 1.0), dim, float)
        n = _tuple(cfg.get("n", 64), dim, int)
        origin = _tuple(cfg.get("origin", 0.0), dim, float)
    except (TypeError, ValueError) as exc:
        raise InputError(str(exc)) from exc
    return Grid(dim=dim, topology=str(cfg.get("topology", PERIODIC)), extent=extent, n=n, origin=origin)


def sym_quadratic(S, u, v=None):
    """Evaluate the symmetric matrix field ``S`` on node vector fields ``u, v``."""
    if v is None:
        v = u
    if S.shape[0] == 1:
        return S[0] * u[0] * v[0]
    xx, xy, yy = S
    return xx * u[0] * v[0] + xy * (u[0] * v[1] + u[1] * v[0]) + yy * u[1] * v[1]


def sym_frobenius_sq(S):
    """Pointwise squared Frobenius norm ``||S||^2``."""
    if S.shape[0] == 1:
        return S[0] ** 2
    xx, xy, yy = S
    return xx**2 + 2.0 * xy**2 + yy**2


def sym_min_eig(S):
    """Pointwise smallest eigenvalue (closed form for 2x2)."""
    if S.shape[0] == 1:
        return S[0].copy()
    xx, xy, yy = S
    half_tr = 0.5 * (xx + yy)
    rad = np.sqrt((0.5 * (xx - yy)) ** 2 + xy**2)
    return half_tr - rad


def sym_identity(grid: Grid, scalar):
    """``scalar * Id`` as a symmetric matrix field."""
    scalar = np.broadcast_to(np.asarray(scalar, dtype=float), grid.shape)
    if grid.dim == 1:
        return scalar[None].copy()
    zero = np.zeros(grid.shape)
    return np.stack([scalar, zero, scalar])


def dot_nodes(u: Sequence[np.ndarray], v: Sequence[np.ndarray]):
    """Pointwise Euclidean inner product of node vector fields."""
    out = u[0] * v[0]
    for a in range(1, len(u)):
        out = out + u[a] * v[a]
    return out
