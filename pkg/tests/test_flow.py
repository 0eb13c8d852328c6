import numpy as np
import pytest

from gdm.errors import InputError, PositivityFailure
from gdm.flow import estimate_decay_rate, forward_operator, generator_backward, run_flow, window_indices
from gdm.functionals import DensityField
from gdm.geometry import grad_divergence
from gdm.scenarios import random_density

from conftest import box, circle, interval, smooth_pair, torus


def test_generator_examples(rng):
    for grid in (circle(64), interval(64), torus(24)):
        rho, mu = smooth_pair(grid)
        for gamma in (0, 0.5, 1, 2):
            assert np.max(np.abs(generator_backward(np.full(grid.shape, 2.0), mu, gamma))) <= 1e-12
            phi = rng.standard_normal(grid.shape)
            uni = DensityField.uniform(grid)
            assert np.allclose(generator_backward(phi, uni, gamma), grid.laplacian(phi), rtol=0, atol=1e-9)


@pytest.mark.parametrize("gamma", [0, 0.5, 1, 1.5, 2])
def test_generator_adjoint_of_forward(gamma, rng):
    for grid in (circle(64), interval(64), box(16)):
        rho = random_density(grid, rng)
        mu = random_density(grid, rng)
        phi = rng.standard_normal(grid.shape)
        lhs = grid.integrate(generator_backward(phi, mu, gamma) * rho.values)
        rhs = grid.integrate(phi * forward_operator(rho, mu, gamma))
        assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("gamma", [0.5, 1, 2])
def test_generator_expanded_form_converges(gamma):
    errs = []
    for n in (64, 128):
        g = circle(n)
        x = g.coords()[0]
        mu = DensityField.normalized(g, np.exp(0.3 * np.cos(2 * np.pi * x)))
        phi = np.sin(2 * np.pi * x)
        a = generator_backward(phi, mu, gamma)
        b = generator_backward(phi, mu, gamma, form="expanded")
        errs.append(np.max(np.abs(a - b)))
    assert errs[1] <= 1e-2 * np.max(np.abs(a))
    assert errs[0] / errs[1] >= 3.5


def test_forward_examples():
    g = circle(128)
    x = g.coords()[0]
    uni = DensityField.uniform(g)
    assert not np.any(forward_operator(uni, uni, 0.5))
    rho = DensityField(g, 1 + 0.1 * np.sin(2 * np.pi * x))
    out = forward_operator(rho, uni, 0)
    exact = -0.1 * (2 * np.pi) ** 2 * np.sin(2 * np.pi * x)
    assert np.max(np.abs(out - exact)) <= 1e-3 * np.max(np.abs(exact))
    for grid in (interval(64), torus(24)):
        r, m = smooth_pair(grid)
        assert abs(grid.integrate(forward_operator(r, m, 0.7))) <= 1e-13


def test_forward_equals_minus_gradient_gamma0_exact(rng):
    for grid in (circle(64), interval(64), torus(24), box(16)):
        for _ in range(10):
            rho = random_density(grid, rng)
            mu = random_density(grid, rng)
            a = forward_operator(rho, mu, 0)
            b = -grad_divergence(rho, mu, 0)
            assert np.max(np.abs(a - b)) <= 1e-10 * np.max(np.abs(a))


@pytest.mark.parametrize("gamma", [0.5, 1, 2])
def test_forward_equals_minus_gradient_second_order(gamma):
    errs = []
    for n in (64, 128, 256):
        g = circle(n)
        rho, mu = smooth_pair(g)
        a = forward_operator(rho, mu, gamma)
        b = -grad_divergence(rho, mu, gamma)
        errs.append(np.max(np.abs(a - b)) / np.max(np.abs(a)))
    assert errs[-1] <= 1e-3
    assert errs[0] / errs[1] >= 3.5 and errs[1] / errs[2] >= 3.5


def test_flow_stationary():
    g = interval(64)
    _, mu = smooth_pair(g)
    tr = run_flow(mu, mu, 0.5, 0.01, 1e-3)
    assert np.all(tr.divergence_series == 0.0)
    assert np.max(np.abs(tr.final.values - mu.values)) <= 1e-10


def test_heat_mode():
    g = circle(128)
    x = g.coords()[0]
    uni = DensityField.uniform(g)
    rho0 = DensityField(g, 1 + 0.1 * np.sin(2 * np.pi * x))
    tr = run_flow(rho0, uni, 1, 0.05, 1e-5)
    exact = 1 + 0.1 * np.exp(-4 * np.pi**2 * 0.05) * np.sin(2 * np.pi * x)
    assert np.max(np.abs(tr.final.values - exact)) <= 1e-3
    assert tr.mass_drift <= 1e-10
    assert np.all(np.diff(tr.divergence_series) <= 0)
    rate = estimate_decay_rate(tr, window_indices(tr, 0.02, 0.05))
    assert rate == pytest.approx(8 * np.pi**2, rel=2e-2)
    # dissipation identity
    dD = np.diff(tr.divergence_series) / tr.dt
    I = tr.fisher_series[1:]
    assert np.max(np.abs(dD + I) / I) <= 5e-2


@pytest.mark.parametrize("gamma", [0, 0.5, 1, 2])
def test_flow_monotone_and_conservative(gamma, rng):
    for grid in (interval(48), box(16)):
        rho = random_density(grid, rng)
        mu = random_density(grid, rng)
        tr = run_flow(rho, mu, gamma, 0.02, 1e-3)
        assert np.all(np.diff(tr.divergence_series) <= 1e-15)
        assert tr.mass_drift <= 1e-10
        assert len(tr.times) == len(tr.divergence_series) == len(tr.fisher_series)
        assert np.all(np.diff(tr.times) > 0)


def test_flow_linearity():
    g = interval(64)
    rho, mu = smooth_pair(g)
    sigma = rho.values - mu.values
    finals = []
    for a in (0.5, 1.0):
        r = DensityField(g, mu.values + a * sigma)
        finals.append(run_flow(r, mu, 0.5, 0.01, 1e-3).final.values - mu.values)
    assert np.max(np.abs(finals[1] - 2 * finals[0])) <= 1e-9 * np.max(np.abs(finals[1]))


def test_flow_input_errors():
    g = circle(32)
    uni = DensityField.uniform(g)
    with pytest.raises(InputError):
        run_flow(uni, uni, 1, 0.1, 0.0)
    with pytest.raises(InputError):
        run_flow(uni, uni, 1, 1e-4, 1e-3)


def test_flow_positivity_failure(monkeypatch):
    # implicit Euler keeps densities positive, so drive the monitor through a faulty kernel
    from gdm import flow as flow_mod

    g = circle(32)
    uni = DensityField.uniform(g)
    x = g.coords()[0]
    rho = DensityField(g, 1 + 0.1 * np.sin(2 * np.pi * x))
    real = flow_mod.kernels.wlap
    calls = {"n": 0}

    def faulty(grid, Wf, u):
        calls["n"] += 1
        out = real(grid, Wf, u)
        return out - 1e6 * (calls["n"] == 3) * np.sin(2 * np.pi * x)

    monkeypatch.setattr(flow_mod.kernels, "wlap", faulty)
    with pytest.raises(PositivityFailure) as exc:
        run_flow(rho, uni, 1, 0.01, 1e-3)
    assert exc.value.step == 3


def test_decay_rate_examples():
    t = np.linspace(0, 1, 21)
    assert estimate_decay_rate((t, np.exp(-3 * t))) == pytest.approx(3.0, abs=1e-10)
    assert estimate_decay_rate((t, np.full_like(t, 0.2))) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(InputError):
        estimate_decay_rate((t[:4], np.exp(-t[:4])))
    with pytest.raises(InputError):
        estimate_decay_rate((t, np.zeros_like(t)))
