import numpy as np
import pytest

from gdm.elliptic import (check_tangent, h_minus1_distance, metric_inner, metric_inner_potentials, weighted_apply,
                          weighted_solve)
from gdm.errors import InputError, SolverFailure
from gdm.functionals import DensityField
from gdm.scenarios import random_density

from conftest import box, circle, interval, smooth_pair, torus


def test_apply_examples(rng):
    g = circle(128)
    x = g.coords()[0]
    assert not np.any(weighted_apply(g, np.ones(g.shape), np.zeros(g.shape)))
    out = weighted_apply(g, np.ones(g.shape), np.sin(2 * np.pi * x) / (4 * np.pi**2))
    assert np.max(np.abs(out + np.sin(2 * np.pi * x))) <= 1e-3
    for grid in (circle(64), interval(64), torus(24), box(16)):
        h = np.exp(rng.standard_normal(grid.shape) * 0.3)
        r = weighted_apply(grid, h, rng.standard_normal(grid.shape))
        assert abs(grid.integrate(r)) <= 1e-12 * grid.integrate(np.abs(r))


def test_apply_rejects_nonpositive_weight():
    g = circle(32)
    with pytest.raises(InputError):
        weighted_apply(g, np.zeros(g.shape), np.ones(g.shape))


def test_solve_examples():
    g = circle(128)
    x = g.coords()[0]
    assert not np.any(weighted_solve(g, np.ones(g.shape), np.zeros(g.shape)))
    phi = weighted_solve(g, np.ones(g.shape), np.sin(2 * np.pi * x))
    exact = np.sin(2 * np.pi * x) / (4 * np.pi**2)
    assert np.max(np.abs(phi - exact)) <= 1e-3 * np.max(np.abs(exact))


@pytest.mark.parametrize("grid", [circle(64), interval(64), torus(24), box(16)], ids=["circle", "interval", "torus", "box"])
def test_solve_round_trip(grid, rng):
    h = np.exp(0.5 * rng.standard_normal(grid.shape))
    sigma = rng.standard_normal(grid.shape)
    sigma -= grid.integrate(sigma) / grid.volume
    phi = weighted_solve(grid, h, sigma)
    assert abs(grid.integrate(phi)) <= 1e-10
    back = weighted_apply(grid, h, phi)
    assert np.linalg.norm(back + sigma) <= 1e-9 * np.linalg.norm(sigma)


def test_solve_rejects_nonzero_mean():
    g = circle(32)
    with pytest.raises(InputError):
        weighted_solve(g, np.ones(g.shape), np.ones(g.shape))
    with pytest.raises(InputError):
        check_tangent(g, np.ones(g.shape))


def test_solve_iteration_cap(rng):
    g = circle(128)
    sigma = rng.standard_normal(g.shape)
    sigma -= g.integrate(sigma) / g.volume
    with pytest.raises(SolverFailure):
        weighted_solve(g, np.exp(rng.standard_normal(g.shape)), sigma, maxiter=3)


def test_solver_monotone_resolution():
    errs = []
    for n in (32, 64, 128):
        g = circle(n)
        x = g.coords()[0]
        phi = weighted_solve(g, np.ones(g.shape), np.sin(2 * np.pi * x))
        errs.append(np.max(np.abs(phi - np.sin(2 * np.pi * x) / (4 * np.pi**2))))
    for a, b in zip(errs, errs[1:]):
        assert 3.6 <= a / b <= 4.4


def test_metric_examples(rng):
    g = circle(128)
    x = g.coords()[0]
    uni = DensityField.uniform(g)
    s = np.sin(2 * np.pi * x)
    assert metric_inner(uni, 1, s, np.zeros(g.shape)) == 0.0
    assert metric_inner(uni, 1, s, s) == pytest.approx(1 / (8 * np.pi**2), rel=1e-3)
    for grid in (circle(64), torus(24), box(16)):
        rho, _ = smooth_pair(grid)
        s1 = rng.standard_normal(grid.shape)
        s2 = rng.standard_normal(grid.shape)
        s1 -= grid.integrate(s1) / grid.volume
        s2 -= grid.integrate(s2) / grid.volume
        for gamma in (0, 0.5, 1, 2):
            rg = rho.values**gamma
            p1 = weighted_solve(grid, rg, s1)
            p2 = weighted_solve(grid, rg, s2)
            m12 = metric_inner(rho, gamma, s1, s2)
            assert m12 == pytest.approx(metric_inner_potentials(rho, gamma, p1, p2), rel=1e-9)
            assert m12 == pytest.approx(metric_inner(rho, gamma, s2, s1), rel=1e-9)
            assert metric_inner(rho, gamma, s1, s1) > 0
            assert metric_inner(rho, gamma, 2 * s1 + s2, s2) == pytest.approx(
                2 * m12 + metric_inner(rho, gamma, s2, s2), rel=1e-9)


def test_h_minus1_examples():
    g = circle(128)
    x = g.coords()[0]
    uni = DensityField.uniform(g)
    rho = DensityField(g, 1 + 0.1 * np.sin(2 * np.pi * x))
    assert h_minus1_distance(uni, uni) == 0.0
    assert h_minus1_distance(rho, uni) == pytest.approx(0.1 / (2 * np.pi * np.sqrt(2)), rel=1e-3)
    assert h_minus1_distance(rho, uni) == pytest.approx(h_minus1_distance(uni, rho), rel=1e-14)


def test_h_minus1_is_gamma0_metric(rng):
    for grid in (interval(64), torus(24)):
        rho, mu = smooth_pair(grid)
        other = random_density(grid, rng)
        d = rho.values - mu.values
        assert h_minus1_distance(rho, mu) ** 2 == pytest.approx(metric_inner(other, 0, d, d), rel=1e-10)
