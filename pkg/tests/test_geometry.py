import numpy as np
import pytest

from gdm.functionals import DensityField
from gdm.geometry import (grad_divergence, hessian_at_equilibrium, hessian_form, hessian_report, j_form, j_ratio,
                          j_ratio_check, j_ratio_scan, yano_check)
from gdm.grid import sym_frobenius_sq, sym_quadratic
from gdm.errors import InputError

from conftest import circle, density, interval, mu_family, potential, smooth_pair, torus

GAMMAS = [0, 0.25, 0.5, 0.75, 1, 1.5, 2]


def test_grad_divergence_examples():
    g = circle(64)
    rho, mu = smooth_pair(g)
    assert not np.any(grad_divergence(mu, mu, 0.5))
    uni = DensityField.uniform(g)
    assert np.allclose(grad_divergence(rho, uni, 0), -g.laplacian(rho.values), rtol=0, atol=1e-9)


def test_hessian_uniform_gamma1():
    g = torus(48)
    rho, _ = smooth_pair(g)
    uni = DensityField.uniform(g)
    phi = potential(g, 0)
    direct = g.integrate(rho.values * sym_frobenius_sq(g.hessian_field(phi)))
    assert hessian_form(rho, uni, 1.0, phi) == pytest.approx(direct, rel=1e-10)


def test_hessian_gamma0_equilibrium_remark():
    g = torus(48)
    _, mu = smooth_pair(g)
    phi = potential(g, 1)
    m1 = 1.0 / mu.values
    H = g.hessian_field(m1, closure="onesided")
    lap = H[0] + H[2]
    gp = g.node_gradient(phi)
    T = H.copy()
    T[0] -= lap
    T[2] -= lap
    direct = g.integrate(sym_quadratic(T, gp) + m1 * sym_frobenius_sq(g.hessian_field(phi)))
    assert hessian_form(mu, mu, 0.0, phi) == pytest.approx(direct, rel=1e-10)


def test_hessian_at_equilibrium_examples():
    g = circle(128)
    x = g.coords()[0]
    uni = DensityField.uniform(g)
    assert hessian_at_equilibrium(uni, 1.0, np.full(g.shape, 2.0)) == 0.0
    val = hessian_at_equilibrium(uni, 1.0, np.sin(2 * np.pi * x))
    assert val == pytest.approx((2 * np.pi) ** 4 / 2, rel=1e-3)


@pytest.mark.parametrize("gamma", GAMMAS)
def test_equilibrium_consistency(gamma):
    g = torus(128)
    _, mu = smooth_pair(g)
    phi = potential(g, 0)
    a = hessian_form(mu, mu, gamma, phi)
    b = hessian_at_equilibrium(mu, gamma, phi)
    assert a == pytest.approx(b, rel=1e-3)


def test_yano_classical_1d():
    g = circle(64)
    uni = DensityField.uniform(g)
    phi = np.random.default_rng(3).standard_normal(g.shape)
    lhs, rhs, gap = yano_check(uni, 1.0, phi)
    assert lhs == rhs == pytest.approx(g.integrate(g.laplacian(phi) ** 2), rel=1e-12)
    assert gap == 0.0


def test_yano_cross_term_vanishes_in_1d():
    g = interval(64)
    _, mu = smooth_pair(g)
    jf = j_form(mu, mu, np.cos(np.pi * g.coords()[0]))
    assert np.all(jf.field == 0.0)


def test_yano_torus_example():
    gaps = []
    for n in (64, 128):
        g = torus(n)
        X, Y = g.coords()
        mu = density(g, 0.3 * np.cos(2 * np.pi * X) + 0.2 * np.sin(2 * np.pi * Y))
        gaps.append(yano_check(mu, 0.5, np.sin(2 * np.pi * X) * np.cos(2 * np.pi * Y)).relative_gap)
    assert gaps[1] <= 1e-3
    assert 3.5 <= gaps[0] / gaps[1] <= 4.5


@pytest.mark.parametrize("gamma", GAMMAS)
@pytest.mark.parametrize("dim,topology", [(1, "periodic"), (1, "reflecting"), (2, "periodic")])
def test_yano_battery(gamma, dim, topology):
    from gdm.grid import build_grid

    for k in range(3):
        for which in (0, 1):
            gaps = []
            for n in (64, 128):
                g = build_grid(dim=dim, topology=topology, n=n)
                gaps.append(yano_check(mu_family(g, k), gamma, potential(g, which)).relative_gap)
            assert gaps[1] <= 1e-3
            # near-exact agreement (e.g. the 1D gamma=0 case) leaves nothing to converge
            assert gaps[1] <= 1e-6 or gaps[0] / gaps[1] >= 3.0


def test_j_form_examples(rng):
    g = torus(32)
    uni = DensityField.uniform(g)
    phi = potential(g, 0)
    assert j_form(uni, uni, phi).value == 0.0
    rho, mu = smooth_pair(g)
    jf = j_form(rho, uni, phi)
    gr = g.node_gradient(np.log(rho.values), closure="onesided")
    gp = g.node_gradient(phi)
    expected = -0.5 * (gr[0] ** 2 + gr[1] ** 2) * (gp[0] ** 2 + gp[1] ** 2)
    assert np.allclose(jf.field, expected, rtol=1e-12, atol=1e-14)
    # independent term-by-term quadrature on random fields
    r = density(g, 0.3 * rng.standard_normal(g.shape))
    m = density(g, 0.3 * rng.standard_normal(g.shape))
    p = rng.standard_normal(g.shape)
    jf = j_form(r, m, p)
    a = g.node_gradient(np.log(r.values), closure="onesided")
    b = g.node_gradient(np.log(m.values), closure="onesided")
    q = g.node_gradient(p)
    term1 = (a[0] * q[0] + a[1] * q[1]) * (b[0] * q[0] + b[1] * q[1])
    term2 = 0.5 * (a[0] * (a[0] + b[0]) + a[1] * (a[1] + b[1])) * (q[0] ** 2 + q[1] ** 2)
    ref = g.integrate(term1) - g.integrate(term2)
    assert jf.value == pytest.approx(ref, rel=1e-12, abs=1e-12 * g.integrate(np.abs(term2)))


def test_j_form_equilibrium_bounds():
    g = torus(48)
    for k in range(3):
        mu = mu_family(g, k)
        phi = potential(g, 0)
        jf = j_form(mu, mu, phi).field
        gm = g.node_gradient(np.log(mu.values), closure="onesided")
        gp = g.node_gradient(phi)
        lower = -(gm[0] ** 2 + gm[1] ** 2) * (gp[0] ** 2 + gp[1] ** 2)
        assert np.all(jf <= 0.0)
        assert np.all(jf >= lower * (1 + 1e-12) - 1e-15)


def test_j_ratio_properties():
    # perpendicular and long a: very negative
    a0 = np.array([1.0, 0.0])
    assert j_ratio(np.array([0.0, 100.0]), a0) < -1000
    # the extremal configuration a = -a0/2 attains |a0|^2/8
    assert j_ratio(-0.5 * a0, a0) == pytest.approx(0.125, rel=1e-14)
    assert abs(j_ratio_scan() - 0.125) <= 1e-6
    assert j_ratio_check(10_000, seed=1) <= 1e-12
    with pytest.raises(InputError):
        j_ratio_check(0)


@pytest.mark.parametrize("gamma", [0, 0.5, 1])
def test_hessian_fd_oracle(gamma):
    g = circle(128)
    rho, mu = smooth_pair(g)
    phi = 0.01 * np.cos(2 * np.pi * g.coords()[0])
    rep = hessian_report(rho, mu, gamma, phi)
    assert rep.relative_gap <= 1e-2
    assert rep.relative_gap == abs(rep.closed_form - rep.fd_value) / max(abs(rep.closed_form), 1e-14)
