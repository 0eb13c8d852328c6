import json

import numpy as np
import pytest

from gdm.elliptic import h_minus1_distance
from gdm.errors import InputError
from gdm.flow import run_flow
from gdm.functionals import DensityField, divergence_gamma
from gdm.gamma_calculus import criterion_kappa, poincare_bound
from gdm.scenarios import random_density
from gdm.verify import (poincare_eigenpair, poincare_optimal_lambda, verify_hypercontractivity, verify_lsi,
                        verify_ph1i, verify_poincare, verify_talagrand)

from conftest import circle, interval, smooth_pair, torus


def gaussian_interval(n=128):
    g = interval(n, extent=2.0, origin=-1.0)
    x = g.coords()[0]
    return g, DensityField.normalized(g, np.exp(-x**2))


def perturbed(g, mu, rng, amp=0.3):
    x = g.coords()[0]
    k = rng.integers(1, 4)
    phase = rng.uniform(0, np.pi)
    bump = amp * rng.uniform(0.3, 1.0) * np.cos(k * np.pi * (x - g.origin[0]) / g.extent[0] + phase)
    return DensityField.normalized(g, mu.values * np.exp(bump))


# ------------------------------------------------------------ hypercontractivity
def test_hyper_synthetic():
    t = np.linspace(0, 1, 101)
    rep = verify_hypercontractivity((t, np.exp(-2 * t)), 1.0)
    assert rep.passed and rep.applicable
    assert abs(rep.margin) <= 1e-12
    assert rep.lhs == pytest.approx(1.0, abs=1e-12)
    # the envelope itself is exceeded by a slower decay
    bad = verify_hypercontractivity((t, np.exp(-t)), 1.0)
    assert not bad.passed
    assert bad.margin < -0.5


def test_hyper_not_applicable_and_errors():
    t = np.linspace(0, 1, 11)
    for kappa in (0.0, -1.0):
        rep = verify_hypercontractivity((t, np.exp(-t)), kappa)
        assert not rep.applicable and not rep.passed
    assert not verify_hypercontractivity((t, np.exp(-t)), 1.0, gamma=2.0).applicable
    with pytest.raises(InputError):
        verify_hypercontractivity((np.array([]), np.array([])), 1.0)


def test_hyper_gaussian_flow(rng):
    g, mu = gaussian_interval(96)
    kappa = criterion_kappa(mu, 1.0).kappa
    rho = perturbed(g, mu, rng)
    tr = run_flow(rho, mu, 1.0, 0.3, 1e-3)
    rep = verify_hypercontractivity(tr, kappa)
    assert rep.passed
    assert np.all(np.asarray(rep.extra["margins"][1:]) > 0)


# ------------------------------------------------------------ LSI
def test_lsi_equilibrium():
    g, mu = gaussian_interval(64)
    rep = verify_lsi(mu, mu, 1.0, 2.0)
    assert rep.passed and rep.lhs == 0.0 and rep.rhs == 0.0


def test_lsi_gaussian_battery(rng):
    g, mu = gaussian_interval(128)
    kappa = criterion_kappa(mu, 1.0).kappa
    for _ in range(50):
        rep = verify_lsi(perturbed(g, mu, rng, amp=0.8), mu, 1.0, kappa)
        assert rep.passed and rep.margin > 0


def test_lsi_not_applicable():
    g = circle(64)
    rho, mu = smooth_pair(g)
    assert not verify_lsi(rho, mu, 1.0, 0.0).applicable
    assert not verify_lsi(rho, mu, 2.0, 1.0).applicable


@pytest.mark.parametrize("gamma", [0.0, 1.0])
def test_lsi_near_equilibrium_sharpness(gamma):
    g, mu = gaussian_interval(128)
    lam, f = poincare_eigenpair(mu, gamma)
    rho = DensityField(g, mu.values * (1 + 1e-3 * f))
    rep = verify_lsi(rho, mu, gamma, 1.0)
    ratio = rep.rhs / rep.lhs  # I / (2D) at kappa = 1
    assert ratio == pytest.approx(lam, rel=5e-2)


# ------------------------------------------------------------ Talagrand
def test_talagrand_equilibrium():
    g, mu = gaussian_interval(64)
    rep = verify_talagrand(mu, mu, 1.0, 2.0)
    assert rep.passed and rep.lhs == 0.0 and rep.rhs == 0.0


@pytest.mark.slow
def test_talagrand_gaussian_gamma1(rng):
    from gdm.geodesic import quantile_distance_1d

    g, mu = gaussian_interval(128)
    kappa = criterion_kappa(mu, 1.0).kappa
    rho = perturbed(g, mu, rng)
    rep = verify_talagrand(rho, mu, 1.0, kappa)
    assert rep.passed and not rep.extra["inconclusive"]
    assert rep.lhs == pytest.approx(quantile_distance_1d(rho, mu), rel=2e-2)
    # consistency triangle: rhs^2 kappa / 2 is the divergence
    assert rep.rhs**2 * kappa / 2 == pytest.approx(divergence_gamma(rho, mu, 1.0), rel=1e-14)


def test_talagrand_gamma0_h_minus1(rng):
    # in 1D the gamma = 0 criterion tensor vanishes identically; in 2D a concave 1/mu gives kappa > 0
    from gdm.grid import build_grid

    g = build_grid(dim=2, topology="reflecting", extent=2.0, n=24, origin=-1.0)
    X, Y = g.coords()
    mu = DensityField.normalized(g, 1.0 / (3.0 - X**2 - Y**2))
    kappa = criterion_kappa(mu, 0.0).kappa
    assert kappa == pytest.approx(2 * g.integrate(1.0 / (3.0 - X**2 - Y**2)), rel=1e-10)
    rho = DensityField.normalized(g, mu.values * np.exp(0.3 * np.cos(np.pi * (X + 1) / 2) * np.cos(np.pi * (Y + 1) / 2)))
    rep = verify_talagrand(rho, mu, 0.0, kappa)
    assert rep.passed
    assert rep.lhs == pytest.approx(h_minus1_distance(rho, mu), rel=1e-6)
    assert rep.extra["h_minus1"] == h_minus1_distance(rho, mu)
    assert rep.rhs**2 * kappa / 2 == pytest.approx(divergence_gamma(rho, mu, 0.0), rel=1e-14)


def test_talagrand_not_applicable():
    g = circle(32)
    rho, mu = smooth_pair(g)
    assert not verify_talagrand(rho, mu, 1.0, -0.5).applicable


# ------------------------------------------------------------ Poincare
def test_poincare_uniform_lambda():
    g = circle(128)
    uni = DensityField.uniform(g)
    for gamma in (0.0, 1.0, 2.0):
        assert poincare_optimal_lambda(uni, gamma) == pytest.approx(4 * np.pi**2, rel=1e-3)


def test_poincare_eigenfunction_equality():
    g, mu = gaussian_interval(128)
    lam, f = poincare_eigenpair(mu, 1.0)
    rep = verify_poincare(f, mu, 1.0, lam)
    assert rep.passed
    assert abs(rep.lhs - rep.rhs) <= 1e-6 * rep.lhs
    assert lam >= poincare_bound(mu, 1.0).kappa - 1e-3


def test_poincare_random_functions(rng):
    g, mu = gaussian_interval(96)
    bound = poincare_bound(mu, 1.0).kappa
    assert bound > 0
    m = mu.values
    for _ in range(100):
        f = rng.standard_normal(g.shape)
        f -= g.integrate(f * m) / g.integrate(m)
        assert verify_poincare(f, mu, 1.0, bound).passed


def test_poincare_trivial_and_errors():
    g, mu = gaussian_interval(64)
    rep = verify_poincare(np.zeros(g.shape), mu, 1.0, 2.0)
    assert rep.passed and rep.lhs == 0.0
    with pytest.raises(InputError):
        verify_poincare(np.ones(g.shape), mu, 1.0, 2.0)
    assert not verify_poincare(np.zeros(g.shape), mu, 1.0, -1.0).applicable


# ------------------------------------------------------------ PH^-1 I
def test_ph1i_equilibrium():
    g = interval(64)
    _, mu = smooth_pair(g)
    rep = verify_ph1i(mu, mu)
    assert rep.passed and rep.lhs == 0.0


def test_ph1i_uniform(rng):
    g = circle(64)
    uni = DensityField.uniform(g)
    for _ in range(20):
        rep = verify_ph1i(random_density(g, rng), uni)
        assert rep.context["kappa"] == 0.0
        assert rep.passed and rep.margin >= 0


def test_ph1i_battery(rng):
    grids = (circle(48), interval(48), torus(16))
    for i in range(200):
        g = grids[i % 3]
        rep = verify_ph1i(random_density(g, rng), random_density(g, rng))
        assert rep.passed and rep.margin >= 0


# ------------------------------------------------------------ reports
def test_reports_are_deterministic():
    g, mu = gaussian_interval(64)
    rho = perturbed(g, mu, np.random.default_rng(7))
    a = [verify_lsi(rho, mu, 1.0, 2.0), verify_ph1i(rho, mu), verify_talagrand(rho, mu, 0.0, 1.0)]
    b = [verify_lsi(rho, mu, 1.0, 2.0), verify_ph1i(rho, mu), verify_talagrand(rho, mu, 0.0, 1.0)]
    for x, y in zip(a, b):
        assert json.dumps(x.to_dict(), sort_keys=True) == json.dumps(y.to_dict(), sort_keys=True)
    d = a[0].to_dict()
    assert set(d) >= {"name", "lhs", "rhs", "margin", "pass", "applicable", "context"}
    assert d["margin"] == d["rhs"] - d["lhs"]
