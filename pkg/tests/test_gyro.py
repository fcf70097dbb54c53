import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gyrocoll.gyro import (GyroError, apply_T, decompose, flow_T, gyroaverage, invert_T, nyquist_part,
                           poincare_ratio, rotate)


def test_average_of_velocity_vanishes(setup):
    grid, fields, _ = setup
    u = np.broadcast_to(grid.v1, grid.shape)
    assert np.max(np.abs(gyroaverage(u))) < 1e-14


def test_average_keeps_kernel_functions(setup):
    grid, fields, cm = setup
    u = np.repeat(np.random.default_rng(0).standard_normal(grid.shape[:3])[..., None], grid.ntheta, -1)
    assert np.max(np.abs(gyroaverage(u) - u)) < 1e-15


def test_average_kills_harmonics(setup):
    grid, *_ = setup
    for k in (1, 2, 5):
        u = np.cos(k * grid.theta)[None, None, None, :] * grid.r[None, None, :, None]
        assert np.max(np.abs(gyroaverage(np.broadcast_to(u, grid.shape)))) < 1e-15 * grid.r_max


def test_T_kernel_exact(setup):
    grid, fields, cm = setup
    assert np.max(np.abs(apply_T(cm.F, grid, fields))) == 0.0


def test_T_of_cos(setup):
    # T = -omega d/dtheta: T cos = omega sin, ||T u|| = omega ||u|| pointwise in x
    grid, fields, _ = setup
    u = np.broadcast_to(grid.cos, grid.shape)
    tu = apply_T(u, grid, fields)
    expected = fields.xb(fields.omega) * grid.sin
    assert np.max(np.abs(tu - expected)) < 1e-13


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_range_of_T_has_zero_average(seed):
    grid, fields, _ = _SMALL
    u = np.random.default_rng(seed).standard_normal(grid.shape)
    assert np.max(np.abs(gyroaverage(apply_T(u, grid, fields)))) < 1e-13


def test_invert_zero(setup):
    grid, fields, _ = setup
    assert np.max(np.abs(invert_T(np.zeros(grid.shape), grid, fields))) == 0.0


@pytest.mark.parametrize("k", [1, 2, 3, 7])
def test_invert_single_harmonic_norm(setup, k):
    grid, fields, _ = setup
    g = np.broadcast_to(np.sin(k * grid.theta)[None, None, None, :] * np.exp(-grid.r**2 / 4)[:, None],
                        grid.shape)
    w = invert_T(g, grid, fields)
    ratio = grid.norm(w) / grid.norm(g)
    om = fields.xb(fields.omega)
    # oracle: w = cos(k theta) g_r / (k omega) per cell
    expected = np.cos(k * grid.theta) * np.exp(-grid.r**2 / 4)[:, None] / (k * om)
    assert np.max(np.abs(w - expected)) < 1e-13
    assert ratio <= 2 * np.pi / fields.omega_min


def test_invert_requires_zero_average(setup):
    grid, fields, cm = setup
    with pytest.raises(GyroError):
        invert_T(cm.F, grid, fields)


def test_invert_roundtrip_random(setup):
    grid, fields, _ = setup
    u = np.random.default_rng(3).standard_normal(grid.shape)
    u = grid.theta_filter(u)
    u = u - gyroaverage(u)
    assert np.max(np.abs(invert_T(apply_T(u, grid, fields), grid, fields) - u)) < 1e-12


def test_projection_orthogonality(setup):
    grid, fields, _ = setup
    rng = np.random.default_rng(4)
    u = rng.standard_normal(grid.shape)
    phi = gyroaverage(rng.standard_normal(grid.shape))
    assert abs(grid.inner(u - gyroaverage(u), phi)) < 1e-12 * grid.norm(u) * grid.norm(phi)


def test_poincare_on_random_samples(setup):
    grid, fields, _ = setup
    rng = np.random.default_rng(5)
    for _ in range(100):
        assert poincare_ratio(rng.standard_normal(grid.shape), grid, fields) <= 2 * np.pi


def test_decompose_and_nyquist(setup):
    grid, *_ = setup
    u = np.random.default_rng(6).standard_normal(grid.shape)
    a, z = decompose(u)
    assert np.allclose(a + z, u) and np.max(np.abs(gyroaverage(z))) < 1e-14
    nq = nyquist_part(u)
    assert np.max(np.abs(grid.theta_filter(u) + nq - u)) < 1e-13


def test_rotation_is_exact_shift_and_matches_flow(setup_uniform):
    grid, fields, _ = setup_uniform
    u = np.random.default_rng(7).standard_normal(grid.shape)
    # rotate evaluates at theta + angle
    assert np.array_equal(rotate(u, 3 * grid.dtheta), np.roll(u, -3, axis=-1))
    # exp(-sT) u solves du/dt = omega du/dtheta: theta -> theta + omega s
    s = 0.37
    smooth = np.broadcast_to(np.cos(grid.theta) + 0.5 * np.sin(2 * grid.theta), grid.shape)
    out = flow_T(smooth, s, grid, fields)
    th = grid.theta + s
    assert np.max(np.abs(out - (np.cos(th) + 0.5 * np.sin(2 * th)))) < 1e-13


def test_T_skew(setup):
    grid, fields, cm = setup
    rng = np.random.default_rng(8)
    a = grid.theta_filter(rng.standard_normal(grid.shape))
    b = grid.theta_filter(rng.standard_normal(grid.shape))
    s = grid.inner(a, apply_T(b, grid, fields)) + grid.inner(b, apply_T(a, grid, fields))
    assert abs(s) < 1e-12 * grid.norm(a) * grid.norm(apply_T(b, grid, fields))


from conftest import make  # noqa: E402

_SMALL = make(nx=4, nr=8, nt=8, tol_mass=1e-3)
