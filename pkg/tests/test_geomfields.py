import numpy as np
import pytest

from gyrocoll import geomfields as geo
from gyrocoll.fields import Profile, drift_ExB
from gyrocoll.gyro import apply_T, gyroaverage

from conftest import TWO_PI, make, smooth_ker


@pytest.fixture(scope="module")
def fine():
    # 1/B products alias at spectral level; 32 nodes push them below 1e-10
    return make(nx=32)


def test_frame_duality(setup):
    grid, fields, _ = setup
    assert np.max(geo.duality_matrix(grid, fields)) < 1e-12


def test_alpha_zero_average_and_reconstruction(setup):
    grid, fields, _ = setup
    al = geo.coeffs_alpha(grid, fields)
    assert max(np.max(np.abs(a.mean(-1))) for a in al) < 1e-14
    bs = geo.frame_fields(grid, fields)
    qm = fields.q / fields.m
    target = (grid.v1, grid.v2, qm * fields.xb(fields.E1), qm * fields.xb(fields.E2))
    for k in range(4):
        rec = sum(al[i] * bs[i][k] for i in range(4))
        assert np.max(np.abs(rec - target[k])) < 1e-12


def test_alpha_without_field(setup_uniform):
    grid, fields, _ = setup_uniform
    al = geo.coeffs_alpha(grid, fields)
    assert np.max(np.abs(al[0])) == 0 and np.max(np.abs(al[3])) == 0


def test_beta_solves_transport(setup):
    grid, fields, _ = setup
    for a, b in zip(geo.coeffs_alpha(grid, fields), geo.coeffs_beta(grid, fields)):
        assert np.max(np.abs(apply_T(b, grid, fields) - (a - gyroaverage(a)))) < 1e-10
        assert np.max(np.abs(b.mean(-1))) < 1e-14


def test_Btilde_from_beta(setup):
    grid, fields, _ = setup
    be = geo.coeffs_beta(grid, fields)
    bs = geo.frame_fields(grid, fields)
    lam = geo.lambda0(grid, fields)
    coef = [be[0] + lam, be[1], be[2], be[3]]
    Bt = geo.field_Btilde(grid, fields)
    for k in range(4):
        assembled = sum(coef[i] * bs[i][k] for i in range(4))
        assert np.max(np.abs(assembled - Bt[k])) < 1e-12


def test_A_vanishes(setup):
    grid, fields, _ = setup
    assert max(np.max(np.abs(c)) for c in geo.field_A(grid, fields)) < 1e-14


def test_corrector_constant_and_equation(setup):
    grid, fields, cm = setup
    assert np.max(np.abs(geo.corrector_h1(np.ones(grid.shape), grid, fields, weighted=False))) < 1e-13
    f = smooth_ker(grid, fields, cm.F)
    h1 = geo.corrector_h1(f, grid, fields)
    adv = geo.advect_a(f, grid, fields)
    assert np.max(np.abs(apply_T(h1, grid, fields) + adv)) < 1e-9 * np.max(np.abs(adv))


def test_corrector_of_space_function(setup):
    # oracle: -B~ . grad g = perp(v)/omega . grad g for g = g(x)
    grid, fields, _ = setup
    X1, X2 = np.meshgrid(grid.x1, grid.x2, indexing="ij")
    g = np.cos(X1) * np.sin(2 * X2) + 2
    u = np.broadcast_to(fields.xb(g), grid.shape)
    d1 = -np.sin(X1) * np.sin(2 * X2)
    d2 = 2 * np.cos(X1) * np.cos(2 * X2)
    expected = (grid.v2 * fields.xb(d1) - grid.v1 * fields.xb(d2)) / fields.xb(fields.omega)
    assert np.max(np.abs(geo.corrector_h1(u, grid, fields, weighted=False) - expected)) < 1e-12


def test_corrector_rejects_non_invariant(setup):
    grid, fields, cm = setup
    with pytest.raises(geo.GeometryError):
        geo.corrector_h1(cm.F * (1 + 0.1 * grid.cos), grid, fields)


def test_C_vanishes_without_fields(setup_uniform):
    grid, fields, _ = setup_uniform
    assert max(np.max(np.abs(c)) for c in geo.field_C(grid, fields)) == 0


def test_gamma_closed_form(fine):
    grid, fields, _ = fine
    gn = geo.coeffs_gamma_numeric(grid, fields)
    gc = geo.coeffs_gamma(grid, fields)
    assert np.max(np.abs(gc[0])) == 0
    for a, b in zip(gn, gc[1:]):
        assert np.max(np.abs(a - b)) < 1e-8


def test_divergence_free_fields(fine):
    grid, fields, _ = fine
    assert np.max(np.abs(geo.div_phase(geo.field_Btilde(grid, fields), grid))) < 1e-10
    assert np.max(np.abs(geo.div_phase(geo.field_C(grid, fields), grid))) < 1e-10


def test_averaged_transport_identity(fine):
    grid, fields, cm = fine
    u = smooth_ker(grid, fields, cm.F)
    lhs = gyroaverage(geo.advect_a(geo.apply_Btilde(u, grid, fields), grid, fields))
    rhs = geo.apply_C(u, grid, fields)
    assert np.max(np.abs(lhs - rhs)) < 1e-8 * np.max(np.abs(rhs))


def test_average_of_Btilde_derivative(setup):
    grid, fields, cm = setup
    w = geo.apply_Btilde(smooth_ker(grid, fields, cm.F), grid, fields)
    assert np.max(np.abs(gyroaverage(w))) < 1e-12 * np.max(np.abs(w))


def test_apply_matches_directional(setup):
    grid, fields, cm = setup
    u = smooth_ker(grid, fields, cm.F) * (1 + 0.2 * grid.cos)
    Bt = geo.field_Btilde(grid, fields)
    assert np.max(np.abs(geo.apply_Btilde(u, grid, fields) - geo.directional(Bt, u, grid))) < 1e-12


def test_frame_commutators(fine):
    grid, fields, cm = fine
    u = smooth_ker(grid, fields, cm.F) * (1 + 0.2 * grid.cos + 0.1 * np.sin(2 * grid.theta))
    om = fields.xb(fields.omega)
    b0 = lambda a: -om * grid.d_theta(a)  # noqa: E731
    b = [lambda a: grid.grad_x(a)[0], lambda a: grid.grad_x(a)[1], lambda a: grid.d_r(a)]
    logs = [fields.xb(fields.dB1 / fields.B), fields.xb(fields.dB2 / fields.B), 0.0]
    scale = np.max(np.abs(b0(u)))
    for bi, lg in zip(b, logs):
        assert np.max(np.abs(bi(b0(u)) - b0(bi(u)) - lg * b0(u))) < 1e-8 * scale
    for i in range(3):
        for j in range(i + 1, 3):
            c = b[i](b[j](u)) - b[j](b[i](u))
            assert np.max(np.abs(c)) < 1e-10 * np.max(np.abs(b[i](b[j](u))))


def test_average_of_divergence(setup):
    grid, fields, cm = setup
    u = smooth_ker(grid, fields, cm.F) * (1 + 0.2 * grid.cos)
    xi = (u, 0.5 * np.roll(u, 2, -1), grid.v2 * u / 3, -np.roll(u, 1, 0) * grid.cos)
    lhs = gyroaverage(geo.div_phase(xi, grid, weighted=True))
    xv = gyroaverage(xi[2] * grid.v1 + xi[3] * grid.v2)
    rhs = grid.div_x(gyroaverage(xi[0]), gyroaverage(xi[1])) + grid.d_r(xv) / grid.r[:, None]
    assert np.max(np.abs(lhs - rhs)) < 1e-10 * np.max(np.abs(lhs))
