"""Inequality verdicts: hypercontractivity envelope, log-Sobolev, Talagrand,
Poincare (with the optimal constant) and the PH^-1 I inequality.

Every check returns a :class:`VerifyReport`.  A report passes when its
margin is at least ``-tol`` where ``tol`` defaults to
``1e-9 * max(|lhs|, |rhs|, 1)`` (plus any solver error bar folded in by the
individual check).  Checks that need a positive curvature constant report
``applicable = False`` instead of failing when the constant is not positive
or when gamma lies outside ``[0, 1]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .elliptic import h_minus1_distance, weighted_apply, weighted_solve
from .errors import InputError, SolverFailure
from .flow import FlowTrace
from .functionals import DensityField, GammaParams, divergence_gamma, fisher_gamma, shared_grid
from .gamma_calculus import criterion_kappa
from .geodesic import wasserstein_gamma

TOL_ENV = 1e-2
REPORT_RTOL = 1e-9
EIG_TOL = 1e-10
EIG_BLOCK = 4
EIG_MAXITER = 2000
CENTER_TOL = 1e-8


@dataclass
class VerifyReport:
    name: str
    lhs: float
    rhs: float
    margin: float
    passed: bool
    applicable: bool = True
    context: dict = field(default_factory=dict)
    tol: float = 0.0
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        out = {
            "name": self.name,
            "lhs": float(self.lhs),
            "rhs": float(self.rhs),
            "margin": float(self.margin),
            "pass": bool(self.passed),
            "applicable": bool(self.applicable),
            "tol": float(self.tol),
            "context": dict(self.context),
        }
        if self.extra:
            out["extra"] = dict(self.extra)
        return out


def report_tol(lhs, rhs):
    return REPORT_RTOL * max(abs(lhs), abs(rhs), 1.0)


def _make(name, lhs, rhs, *, applicable=True, context=None, extra_tol=0.0, extra=None, margin=None):
    lhs, rhs = float(lhs), float(rhs)
    margin = rhs - lhs if margin is None else float(margin)
    tol = report_tol(lhs, rhs) + float(extra_tol)
    passed = bool(margin >= -tol) if applicable else False
    return VerifyReport(name, lhs, rhs, margin, passed, applicable, dict(context or {}), tol, dict(extra or {}))


def _not_applicable(name, reason, context=None):
    ctx = dict(context or {})
    ctx["reason"] = reason
    return VerifyReport(name, float("nan"), float("nan"), float("nan"), False, False, ctx, 0.0)


def _kappa_gate(name, kappa, gamma, context):
    if not kappa > 0:
        return _not_applicable(name, f"needs kappa > 0, got {kappa:.6g}", context)
    if gamma is not None and not 0.0 <= gamma <= 1.0:
        return _not_applicable(name, f"kappa-based bound requires gamma in [0, 1], got {gamma}", context)
    return None


def _describe(rho, mu, gamma, kappa):
    ctx = {"grid": rho.grid.descriptor(), "kappa": float(kappa)}
    if gamma is not None:
        ctx["gamma"] = float(gamma)
    return ctx


# ---------------------------------------------------------------- verdicts
def verify_hypercontractivity(trace, kappa, *, tol_env=TOL_ENV, gamma=None) -> VerifyReport:
    """Envelope check ``D(t) <= exp(-2 kappa t) D(0) (1 + tol_env)``.

    ``trace`` is a :class:`FlowTrace` or a ``(times, values)`` pair.  The
    reported ``lhs`` is ``max_t D(t) exp(2 kappa t) / D(0)`` (which is 1 at
    ``t = 0``), ``rhs`` is 1 and the margin is ``rhs - lhs``; the verdict
    passes when the margin is at least ``-tol_env``.  ``extra["margins"]``
    holds ``exp(-2 kappa t) D(0) - D(t)`` at every recorded time.
    """
    if isinstance(trace, FlowTrace):
        t, d = trace.times, trace.divergence_series
        gamma = trace.gamma if gamma is None else gamma
    else:
        t, d = trace
    t = np.asarray(t, dtype=float)
    d = np.asarray(d, dtype=float)
    if t.size == 0 or t.shape != d.shape:
        raise InputError("hypercontractivity needs a non-empty trace")
    ctx = {"kappa": float(kappa), "tol_env": float(tol_env), "t_max": float(t[-1])}
    if gamma is not None:
        ctx["gamma"] = float(gamma)
    gate = _kappa_gate("hypercontractivity", kappa, gamma, ctx)
    if gate is not None:
        return gate
    if not np.all(d > 0):
        raise InputError("hypercontractivity needs a positive divergence series")
    envelope = np.exp(-2.0 * kappa * t) * d[0]
    ratio = float(np.max(d / envelope))
    margin = 1.0 - ratio
    rep = VerifyReport("hypercontractivity", ratio, 1.0, margin, bool(margin >= -tol_env), True, ctx, float(tol_env))
    rep.extra["margins"] = (envelope - d).tolist()
    rep.extra["min_margin"] = float(np.min(envelope - d))
    return rep


def verify_lsi(rho: DensityField, mu: DensityField, gamma, kappa) -> VerifyReport:
    """Generalized log-Sobolev inequality ``D_gamma <= I_gamma / (2 kappa)``."""
    shared_grid(rho, mu)
    g = GammaParams.of(gamma).gamma
    ctx = _describe(rho, mu, g, kappa)
    gate = _kappa_gate("lsi", kappa, g, ctx)
    if gate is not None:
        return gate
    D = divergence_gamma(rho, mu, g)
    I = fisher_gamma(rho, mu, g)
    return _make("lsi", D, I / (2.0 * kappa), context=ctx)


def verify_talagrand(rho: DensityField, mu: DensityField, gamma, kappa, **shoot) -> VerifyReport:
    """Generalized Talagrand inequality ``W_gamma(rho, mu) <= sqrt(2 D_gamma / kappa)``.

    The shooting misfit (an L2 error bar on the endpoint) is added to the
    tolerance; ``extra["inconclusive"]`` flags a shooting run that did not
    converge or failed outright.
    """
    shared_grid(rho, mu)
    g = GammaParams.of(gamma).gamma
    ctx = _describe(rho, mu, g, kappa)
    gate = _kappa_gate("talagrand", kappa, g, ctx)
    if gate is not None:
        return gate
    D = divergence_gamma(rho, mu, g)
    rhs = float(np.sqrt(max(2.0 * D / kappa, 0.0)))
    if np.array_equal(rho.values, mu.values):
        return _make("talagrand", 0.0, rhs, context=ctx, extra={"misfit": 0.0, "inconclusive": False})
    try:
        res = wasserstein_gamma(rho, mu, g, **shoot)
    except SolverFailure as exc:
        rep = _make("talagrand", float("nan"), rhs, context=ctx, extra={"inconclusive": True, "error": str(exc)})
        rep.passed = False
        return rep
    extra = {"misfit": float(res.misfit), "inconclusive": not res.converged}
    if g == 0.0:
        extra["h_minus1"] = h_minus1_distance(rho, mu)
    return _make("talagrand", res.distance, rhs, context=ctx, extra_tol=res.misfit, extra=extra)


def verify_ph1i(rho: DensityField, mu: DensityField, kappa=None) -> VerifyReport:
    """``D_0 <= sqrt(I_0) H^-1 - kappa/2 (H^-1)^2`` for any real ``kappa``
    (default: the gamma = 0 criterion constant of ``mu``)."""
    shared_grid(rho, mu)
    if kappa is None:
        kappa = criterion_kappa(mu, 0.0).kappa
    D = divergence_gamma(rho, mu, 0.0)
    I = fisher_gamma(rho, mu, 0.0)
    H = h_minus1_distance(rho, mu)
    rhs = float(np.sqrt(max(I, 0.0)) * H - 0.5 * kappa * H * H)
    return _make("ph1i", D, rhs, context=_describe(rho, mu, 0.0, kappa), extra={"h_minus1": H, "fisher": I})


# ---------------------------------------------------------------- Poincare
def _mu_center(grid, mu, f):
    return f - grid.integrate(f * mu) / grid.integrate(mu)


def poincare_eigenpair(mu: DensityField, gamma, *, tol=EIG_TOL, maxiter=EIG_MAXITER, seed=0, block=EIG_BLOCK):
    """Smallest nonzero eigenpair of ``-div(mu^gamma grad f) = lambda mu f`` with ``int f mu = 0``.

    Block inverse iteration with Rayleigh-Ritz on ``block`` vectors, so
    (near-)degenerate eigenvalues do not stall convergence.  Returns
    ``(lam, f)`` with ``f`` normalised to ``int f^2 mu = 1``.
    """
    grid = mu.grid
    p = GammaParams.of(gamma)
    m = mu.values
    w = m**p.gamma
    rng = np.random.default_rng(seed)
    k = max(1, min(int(block), grid.size - 1))
    V = [_mu_center(grid, m, rng.standard_normal(grid.shape)) for _ in range(k)]
    lam_prev = np.inf
    guess = [None] * k
    for it in range(1, maxiter + 1):
        # one inverse step per block vector: -Delta_W g = mu v
        new = []
        for j, v in enumerate(V):
            g = weighted_solve(grid, w, m * v, x0=guess[j])
            guess[j] = g
            new.append(_mu_center(grid, m, g))
        KV = [-weighted_apply(grid, w, v) for v in new]
        K = np.array([[grid.integrate(a * b) for b in new] for a in KV])
        M = np.array([[grid.integrate(m * a * b) for b in new] for a in new])
        K = 0.5 * (K + K.T)
        M = 0.5 * (M + M.T)
        L = np.linalg.cholesky(M)
        Li = np.linalg.inv(L)
        evals, Y = np.linalg.eigh(Li @ K @ Li.T)
        C = Li.T @ Y
        V = [sum(C[i, j] * new[i] for i in range(k)) for j in range(k)]
        guess = [sum(C[i, j] * guess[i] for i in range(k)) for j in range(k)]
        lam = float(evals[0])
        if abs(lam - lam_prev) <= tol * abs(lam):
            f = V[0]
            f = f / np.sqrt(grid.integrate(m * f * f))
            lam = float(grid.integrate(-weighted_apply(grid, w, f) * f))
            return lam, f
        lam_prev = lam
    raise SolverFailure(f"poincare eigenproblem did not converge in {maxiter} iterations")


def poincare_optimal_lambda(mu: DensityField, gamma, **kw) -> float:
    """Optimal constant of the generalized Poincare inequality (smallest nonzero eigenvalue)."""
    return poincare_eigenpair(mu, gamma, **kw)[0]


def verify_poincare(f, mu: DensityField, gamma, lam) -> VerifyReport:
    """``int f^2 mu <= (1/lambda) int |grad f|^2 mu^gamma`` for ``mu``-centred ``f``."""
    grid = mu.grid
    p = GammaParams.of(gamma)
    f = grid.check_scalar(f, "test function")
    m = mu.values
    center = grid.integrate(f * m)
    scale = max(1.0, float(np.sqrt(grid.integrate(f * f * m))))
    if abs(center) > CENTER_TOL * scale:
        raise InputError(f"test function must satisfy int f mu = 0 (got {center:.3e})")
    ctx = {"grid": grid.descriptor(), "gamma": float(p.gamma), "lambda": float(lam)}
    if not lam > 0:
        return _not_applicable("poincare", f"needs lambda > 0, got {lam:.6g}", ctx)
    lhs = grid.integrate(f * f * m)
    energy = grid.integrate(m**p.gamma * grid.face_inner(grid.gradient(f), grid.gradient(f)))
    return _make("poincare", lhs, energy / lam, context=ctx)
