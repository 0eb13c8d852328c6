"""Scenario files and density specifications.

A scenario is a line-based ``key = value`` file; ``#`` starts a comment.

    dim = 1                 # 1 or 2                      (required)
    n = 128                 # nodes per axis, >= 16        (required)
    gamma = 0.5             #                              (required)
    mu = uniform            # density spec                 (required)
    rho0 = trig:a1=0.1      # density spec                 (default: uniform)
    topology = periodic     # or reflecting                (default: periodic)
    extent = 1.0            # side length                  (default: 1.0)
    tmax = 0.1
    dt = 1e-4
    tol = 1e-3
    seed = 42

Density specs (``family:key=value,...``), all normalised to unit mass:

``uniform``
``trig:a1=..,b1=..``
    ``exp(sum_k a_k cos(k w x) + b_k sin(k w x))`` with ``w = 2 pi / L`` on
    periodic and ``pi / L`` on reflecting axes; in 2D the per-axis keys are
    ``ax_k, bx_k, ay_k, by_k`` (plain ``a_k, b_k`` act on x).
``gaussian_interval:center=..,var=..``
    ``exp(-|x - center|^2 / (2 var))``; reflecting domains only; ``center``
    defaults to the middle of the domain.

After normalisation every density must stay above ``0.05 / volume``.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InputError
from .functionals import DensityField
from .grid import MIN_NODES, PERIODIC, TOPOLOGIES, Grid, build_grid

MIN_LEVEL = 0.05
RANDOM_FLOOR = 0.1
DEFAULTS = {"topology": PERIODIC, "extent": 1.0, "rho0": "uniform", "tmax": 0.1, "dt": 1e-4, "tol": 1e-3, "seed": 42}
REQUIRED = ("dim", "n", "gamma", "mu")
KEYS = ("dim", "topology", "extent", "n", "gamma", "mu", "rho0", "tmax", "dt", "seed", "tol")
FAMILIES = ("uniform", "trig", "gaussian_interval")

_TRIG_KEY = re.compile(r"^([ab])([xy]?)(\d+)$")


@dataclass(frozen=True)
class DensitySpec:
    family: str
    params: tuple = ()

    @property
    def text(self):
        if not self.params:
            return self.family
        return self.family + ":" + ",".join(f"{k}={v!r}" for k, v in self.params)

    def build(self, grid: Grid) -> DensityField:
        logd = self.log_density(grid)
        dens = DensityField.normalized(grid, np.exp(logd - np.max(logd)))
        low = float(np.min(dens.values))
        if low < MIN_LEVEL / grid.volume:
            raise InputError(f"density {self.text!r} drops to {low:.4g} (< {MIN_LEVEL / grid.volume:.4g})")
        return dens

    def log_density(self, grid: Grid):
        coords = grid.coords()
        if self.family == "uniform":
            return np.zeros(grid.shape)
        p = dict(self.params)
        if self.family == "gaussian_interval":
            if grid.periodic:
                raise InputError("gaussian_interval needs a reflecting domain")
            var = p.get("var", 1.0)
            out = np.zeros(grid.shape)
            for a in range(grid.dim):
                c = p.get("center", grid.origin[a] + 0.5 * grid.extent[a])
                out = out - (coords[a] - c) ** 2 / (2.0 * var)
            return out
        out = np.zeros(grid.shape)
        w = (2.0 if grid.periodic else 1.0) * np.pi
        for key, val in self.params:
            kind, axis, k = _TRIG_KEY.match(key).groups()
            a = 1 if axis == "y" else 0
            if a >= grid.dim:
                raise InputError(f"trig coefficient {key!r} refers to a missing axis")
            xi = (coords[a] - grid.origin[a]) / grid.extent[a]
            arg = w * int(k) * xi
            out = out + val * (np.cos(arg) if kind == "a" else np.sin(arg))
        return out


def parse_density(text: str) -> DensitySpec:
    text = text.strip()
    family, _, rest = text.partition(":")
    family = family.strip()
    if family not in FAMILIES:
        raise InputError(f"unknown density family {family!r}")
    params = []
    if rest.strip():
        for item in rest.split(","):
            key, eq, val = item.partition("=")
            key = key.strip()
            if not eq:
                raise InputError(f"malformed density parameter {item.strip()!r}")
            try:
                num = float(val)
            except ValueError:
                raise InputError(f"density parameter {key!r} is not a number: {val.strip()!r}") from None
            if not np.isfinite(num):
                raise InputError(f"density parameter {key!r} must be finite")
            params.append((key, num))
    allowed = {"uniform": (), "gaussian_interval": ("center", "var")}
    for key, val in params:
        if family == "trig":
            if not _TRIG_KEY.match(key):
                raise InputError(f"bad trig coefficient {key!r} (expected a1, b2, ax1, by3, ...)")
            if int(_TRIG_KEY.match(key).group(3)) < 1:
                raise InputError("trig mode numbers start at 1")
        elif key not in allowed[family]:
            raise InputError(f"unknown parameter {key!r} for {family}")
    if family == "gaussian_interval" and dict(params).get("var", 1.0) <= 0:
        raise InputError("gaussian_interval variance must be positive")
    if family == "uniform" and params:
        raise InputError("uniform takes no parameters")
    return DensitySpec(family, tuple(params))


@dataclass(frozen=True)
class Scenario:
    dim: int
    n: int
    gamma: float
    mu: DensitySpec
    rho0: DensitySpec = field(default_factory=lambda: DensitySpec("uniform"))
    topology: str = PERIODIC
    extent: float = 1.0
    tmax: float = 0.1
    dt: float = 1e-4
    tol: float = 1e-3
    seed: int = 42
    digest: str = ""

    def grid(self) -> Grid:
        return build_grid(dim=self.dim, topology=self.topology, extent=self.extent, n=self.n)

    def densities(self, grid: Grid | None = None):
        grid = self.grid() if grid is None else grid
        return self.mu.build(grid), self.rho0.build(grid)

    def with_overrides(self, n=None, gamma=None) -> "Scenario":
        out = self
        if n is not None:
            if int(n) < MIN_NODES:
                raise InputError(f"n must be at least {MIN_NODES}")
            out = replace(out, n=int(n))
        if gamma is not None:
            out = replace(out, gamma=float(gamma))
        return out

    def to_dict(self):
        return {
            "dim": self.dim,
            "n": self.n,
            "gamma": self.gamma,
            "mu": self.mu.text,
            "rho0": self.rho0.text,
            "topology": self.topology,
            "extent": self.extent,
            "tmax": self.tmax,
            "dt": self.dt,
            "tol": self.tol,
            "seed": self.seed,
        }


def _positive(v, key):
    if not (np.isfinite(v) and v > 0):
        raise InputError(f"{key} must be positive")
    return v


def _convert(key, raw):
    if key in ("dim", "n", "seed"):
        try:
            v = int(raw)
        except ValueError:
            raise InputError(f"{key} must be an integer, got {raw!r}") from None
        if key == "dim" and v not in (1, 2):
            raise InputError("dim must be 1 or 2")
        if key == "n" and v < MIN_NODES:
            raise InputError(f"n must be at least {MIN_NODES}")
        if key == "seed" and v < 0:
            raise InputError("seed must be non-negative")
        return v
    if key in ("gamma", "extent", "tmax", "dt", "tol"):
        try:
            v = float(raw)
        except ValueError:
            raise InputError(f"{key} must be a number, got {raw!r}") from None
        if not np.isfinite(v):
            raise InputError(f"{key} must be finite")
        return v if key == "gamma" else _positive(v, key)
    if key == "topology":
        if raw not in TOPOLOGIES:
            raise InputError(f"topology must be one of {TOPOLOGIES}, got {raw!r}")
        return raw
    return parse_density(raw)


def parse_scenario(text: str) -> Scenario:
    """Parse scenario text; errors carry the offending line number."""
    values = {}
    lines = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        key, eq, raw = body.partition("=")
        key, raw = key.strip(), raw.strip()
        if not eq or not key:
            raise InputError(f"expected 'key = value', got {body!r}", line=lineno)
        if key not in KEYS:
            raise InputError(f"unknown key {key!r}", line=lineno)
        if key in values:
            raise InputError(f"duplicate key {key!r}", line=lineno)
        try:
            values[key] = _convert(key, raw)
        except InputError as exc:
            raise InputError(str(exc), line=lineno) from None
        lines[key] = lineno
    missing = [k for k in REQUIRED if k not in values]
    if missing:
        raise InputError(f"missing required key(s): {', '.join(missing)}")
    for k, v in DEFAULTS.items():
        values.setdefault(k, parse_density(v) if k == "rho0" else v)
    if values["dt"] > values["tmax"]:
        raise InputError("dt must not exceed tmax", line=lines.get("dt"))
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    sc = Scenario(digest=digest, **values)
    grid = sc.grid()
    for key in ("mu", "rho0"):
        try:
            getattr(sc, key).build(grid)
        except InputError as exc:
            raise InputError(str(exc), line=lines.get(key)) from None
    return sc


def load_scenario(path) -> Scenario:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read scenario {path}: {exc.strerror}") from None
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError:
        raise InputError(f"scenario {path} is not valid UTF-8") from None
    return parse_scenario(text)


# ------------------------------------------------------------ random fields
def random_log_field(grid: Grid, rng, modes=3, scale=0.3):
    """Random smooth trigonometric field with amplitudes ``scale / k`` per mode."""
    coords = grid.coords()
    w = (2.0 if grid.periodic else 1.0) * np.pi
    out = np.zeros(grid.shape)
    for a in range(grid.dim):
        xi = (coords[a] - grid.origin[a]) / grid.extent[a]
        for k in range(1, modes + 1):
            ca, cb = rng.uniform(-1.0, 1.0, 2) * scale / k
            out = out + ca * np.cos(w * k * xi) + cb * np.sin(w * k * xi)
    if grid.dim == 2:
        xi = [(coords[a] - grid.origin[a]) / grid.extent[a] for a in range(2)]
        c = rng.uniform(-1.0, 1.0) * scale / 2
        out = out + c * np.cos(w * xi[0]) * np.cos(w * xi[1])
    return out


def random_density(grid: Grid, rng, modes=3, scale=0.3, floor=RANDOM_FLOOR) -> DensityField:
    """Random trigonometric density (log-space) with ``min >= floor / volume``."""
    for _ in range(100):
        dens = DensityField.normalized(grid, np.exp(random_log_field(grid, rng, modes, scale)))
        if np.min(dens.values) >= floor / grid.volume:
            return dens
        scale *= 0.7
    raise InputError("could not draw a random density above the floor")


def probe_potential(grid: Grid, which=0, amplitude=1.0):
    """Smooth deterministic test potentials compatible with the boundary conditions.

    ``which=0``: ``sin(w x) [cos(w y)]`` on periodic axes, ``cos(pi x/L) [cos(pi y/L)]``
    on reflecting ones.  ``which=1``: a two-mode variant.
    """
    coords = grid.coords()
    xi = [(coords[a] - grid.origin[a]) / grid.extent[a] for a in range(grid.dim)]
    if grid.periodic:
        w = 2.0 * np.pi
        first = np.sin(w * xi[0]) if which == 0 else np.cos(2 * w * xi[0])
        second = np.cos if which == 0 else np.sin
    else:
        w = np.pi
        first = np.cos(w * xi[0]) if which == 0 else np.cos(2 * w * xi[0])
        second = np.cos
    if grid.dim == 1:
        out = first if which == 0 else first + 0.5 * np.cos(w * xi[0])
    elif which == 0:
        out = first * second(w * xi[1])
    else:
        out = first + 0.5 * second(w * xi[1])
    return amplitude * out
