import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gyrocoll.phasegrid import GridError, build_grid, fd_weights, radial_weights


def test_node_count():
    # four radial nodes cannot resolve the Maxwellian; relax the mass check
    g = build_grid(8, 8, 1, 1, 4, 8, 5.0, tol_mass=1e-2)
    assert g.shape == (8, 8, 4, 8)
    assert np.prod(g.shape) == 2048


def test_odd_ntheta_rejected():
    with pytest.raises(GridError, match="ntheta"):
        build_grid(2, 2, 1, 1, 4, 7, 5.0)


def test_small_rmax_rejected_with_message():
    with pytest.raises(GridError, match="r_max"):
        build_grid(4, 4, 1, 1, 32, 8, 4.0)


@pytest.mark.parametrize("nr", [32, 48, 64])
def test_maxwellian_mass_matches_truncated_gaussian(nr):
    # oracle: exact mass of the Gaussian truncated at r_max
    for r_max in (6.0, 6.5, 7.0):
        g = build_grid(4, 4, 1, 1, nr, 8, r_max, tol_mass=1e-7)
        quad = float(np.sum(g.wv * g.maxwellian_r[:, None]))
        assert quad == pytest.approx(1 - np.exp(-r_max**2 / 2), abs=2e-9)


def test_default_rmax_mass_normalised():
    g = build_grid(4, 4, 1, 1, 32, 8)
    assert abs(np.sum(g.wv * g.maxwellian_r[:, None]) - 1) < 1e-8


def test_theta_trapezoid_kills_harmonics():
    g = build_grid(2, 2, 1, 1, 8, 16, tol_mass=1e-4)
    for k in range(1, 16):
        assert abs(np.exp(1j * k * g.theta).sum()) < 1e-13


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 2.0), st.integers(0, 4))
def test_radial_quadrature_exact_on_nodes(a, p):
    # velocity quadrature equals the radial weights applied to the sampled profile
    g = build_grid(2, 2, 1, 1, 16, 8, tol_mass=1e-5)
    prof = g.r**p * np.exp(-a * g.r**2)
    lhs = g.integrate_v(np.broadcast_to(prof[:, None], (g.nr, g.ntheta)))
    assert lhs == pytest.approx(2 * np.pi * np.sum(g.wr * prof), rel=1e-14)


def test_radial_weights_integrate_smooth_profiles():
    # oracle: closed-form integrals of Gaussian moments on [0, R]
    nr, R = 64, 6.5
    w = radial_weights(nr, R)
    r = (np.arange(nr) + 0.5) * R / nr
    # the rule assumes a flat profile at R, so the error is set by the tail
    assert np.sum(w * np.exp(-r**2 / 2)) == pytest.approx(1 - np.exp(-R**2 / 2), abs=1e-10)
    exact = 2 - np.exp(-R**2 / 2) * (R**2 + 2)
    assert np.sum(w * r**2 * np.exp(-r**2 / 2)) == pytest.approx(exact, abs=1e-8)


def test_moments_of_maxwellian():
    g = build_grid(4, 4, 1, 1, 32, 16)
    M = np.broadcast_to(g.maxwellian_r[:, None], (4, 4, g.nr, g.ntheta))
    mom = g.moments(M)
    assert np.allclose(mom["rho"], 1, atol=1e-8)
    assert np.max(np.abs(mom["j"])) < 1e-12
    # oracle: first moment of v1 * v1 M is the variance T/m
    j1 = g.integrate_v(g.v1 * (g.v1 * g.maxwellian_r[:, None]))
    assert j1 == pytest.approx(1.0, abs=1e-7)


def test_fd_weights_reproduce_polynomials():
    x = np.linspace(-1, 1, 7)
    w = fd_weights(0.1, x, 1)
    for p in range(7):
        assert np.dot(w, x**p) == pytest.approx(p * 0.1 ** (p - 1) if p else 0.0, abs=1e-11)


def test_spectral_gradient_and_divergence():
    g = build_grid(16, 16, 2 * np.pi, 2 * np.pi, 8, 8, tol_mass=1e-4)
    X1, X2 = np.meshgrid(g.x1, g.x2, indexing="ij")
    u = np.sin(X1) * np.cos(2 * X2)
    d1, d2 = g.grad_x(u)
    assert np.allclose(d1, np.cos(X1) * np.cos(2 * X2), atol=1e-13)
    assert np.allclose(d2, -2 * np.sin(X1) * np.sin(2 * X2), atol=1e-13)
    assert np.allclose(g.div_x(u, u), d1 + d2, atol=1e-13)


def test_radial_derivative_of_maxwellian_weighted_profile():
    g = build_grid(2, 2, 1, 1, 32, 8)
    M = g.maxwellian_r
    u = (M * (1 + 0.3 * g.r**2))[:, None] * np.ones(g.ntheta)
    exact = (M * (-g.r * (1 + 0.3 * g.r**2) + 0.6 * g.r))[:, None]
    assert np.max(np.abs(g.d_r(u) - exact)) < 1e-6


def test_weighted_inner_and_norm():
    g = build_grid(4, 4, 1, 1, 8, 8, tol_mass=1e-4)
    rng = np.random.default_rng(1)
    a = rng.standard_normal(g.shape)
    w = 1 + rng.random(g.shape)
    assert g.norm(a, w) ** 2 == pytest.approx(g.inner(a, a, w), rel=1e-14)
    assert g.inner(a, a, w) == pytest.approx(np.sum(a * a / w * g.wv) * g.cell_area, rel=1e-13)
