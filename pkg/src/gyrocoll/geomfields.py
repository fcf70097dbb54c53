"""Frame fields, averaged transport coefficients and correctors.

Phase-space vectors are 4-tuples ``(X1, X2, V1, V2)`` of arrays broadcastable
to the grid shape.  The transport field is ``a = (v, q E / m)`` and the
generator of the fast motion is ``b0 = (0, 0, omega perp(v))``.  The prime
integrals are ``psi0 = -angle(v)``, ``psi1 = x1``, ``psi2 = x2`` and
``psi3 = |v|`` with dual frame ``b1 = e_x1``, ``b2 = e_x2``,
``b3 = (0, 0, v/|v|)``.

Operators taking a ``weighted`` flag differentiate in |v| with the
Maxwellian-factored stencil (distribution functions) or the plain one
(polynomial coefficient fields); see ``PhaseGrid.d_r``.
"""

from __future__ import annotations

import numpy as np

from .fields import FieldSet, drift_ExB, drift_gradB
from .gyro import gyroaverage
from .phasegrid import PhaseGrid


class GeometryError(ValueError):
    """Input outside the domain of a geometric operator."""


def _xb(a):
    return np.asarray(a)[:, :, None, None]


# ---- frame --------------------------------------------------------------
def prime_integral_gradients(grid: PhaseGrid) -> list[tuple]:
    """Analytic gradients of (psi0, psi1, psi2, psi3) on the nodes."""
    r2 = grid.r[:, None] ** 2
    z = np.zeros((1, 1, 1, 1))
    one = np.ones((1, 1, 1, 1))
    r = grid.r[:, None]
    g0 = (z, z, (grid.v2 / r2)[None, None], (-grid.v1 / r2)[None, None])
    g1 = (one, z, z, z)
    g2 = (z, one, z, z)
    g3 = (z, z, (grid.v1 / r)[None, None], (grid.v2 / r)[None, None])
    return [g0, g1, g2, g3]


def frame_fields(grid: PhaseGrid, fields: FieldSet) -> list[tuple]:
    """(b0, b1, b2, b3)."""
    z = np.zeros((1, 1, 1, 1))
    one = np.ones((1, 1, 1, 1))
    om = _xb(fields.omega)
    b0 = (z, z, om * grid.v2[None, None], -om * grid.v1[None, None])
    b3 = (z, z, (grid.cos * np.ones_like(grid.R))[None, None], (grid.sin * np.ones_like(grid.R))[None, None])
    return [b0, (one, z, z, z), (z, one, z, z), b3]


def duality_matrix(grid: PhaseGrid, fields: FieldSet) -> np.ndarray:
    """max over nodes of |b^i . grad psi_j - D_ij| with D = diag(omega, 1, 1, 1).

    Returns the 4x4 array of maximal deviations."""
    bs = frame_fields(grid, fields)
    gs = prime_integral_gradients(grid)
    om = _xb(fields.omega)
    out = np.zeros((4, 4))
    for i, b in enumerate(bs):
        for j, g in enumerate(gs):
            val = sum(bk * gk for bk, gk in zip(b, g))
            target = (om if i == 0 else 1.0) if i == j else 0.0
            out[i, j] = float(np.max(np.abs(val - target)))
    return out


# ---- averaged-transport coefficients --------------------------------------
def coeffs_alpha(grid: PhaseGrid, fields: FieldSet) -> list[np.ndarray]:
    """alpha_i = a . grad psi_i on the nodes."""
    qm = fields.q / fields.m
    E1, E2, om = _xb(fields.E1), _xb(fields.E2), _xb(fields.omega)
    r = grid.r[:, None]
    v1, v2 = grid.v1[None, None], grid.v2[None, None]
    a0 = qm * (E1 * v2 - E2 * v1) / (om * r**2)
    a3 = qm * (E1 * v1 + E2 * v2) / r
    full = np.ones(grid.shape)
    return [a0 * full, v1 * full, v2 * full, a3 * full]


def coeffs_beta(grid: PhaseGrid, fields: FieldSet) -> list[np.ndarray]:
    """Zero-average solutions of b0 . grad beta_i = alpha_i - <alpha_i>."""
    qm = fields.q / fields.m
    E1, E2, om = _xb(fields.E1), _xb(fields.E2), _xb(fields.omega)
    r = grid.r[:, None]
    v1, v2 = grid.v1[None, None], grid.v2[None, None]
    va1, va2 = drift_ExB(fields)
    b0 = qm * (E1 * v1 + E2 * v2) / (om**2 * r**2)
    b3 = (_xb(va1) * v1 + _xb(va2) * v2) / r
    full = np.ones(grid.shape)
    return [b0 * full, -v2 / om * full, v1 / om * full, b3 * full]


def lambda0(grid: PhaseGrid, fields: FieldSet) -> np.ndarray:
    """-(v . grad omega) / omega^3."""
    qm = fields.q / fields.m
    om = _xb(fields.omega)
    d1, d2 = qm * _xb(fields.dB1), qm * _xb(fields.dB2)
    return -(grid.v1[None, None] * d1 + grid.v2[None, None] * d2) / om**3


def coeffs_gamma(grid: PhaseGrid, fields: FieldSet) -> list[np.ndarray]:
    """Closed-form averaged coefficients (gamma0, gamma1, gamma2, gamma3)."""
    va1, va2 = drift_ExB(fields)
    g1, g2 = drift_gradB(grid, fields)
    c = contraction_rate(fields)
    r = grid.r[None, None, :, None]
    shape = (grid.nx1, grid.nx2, grid.nr, 1)
    return [np.zeros(shape), -(_xb(va1) + g1) * np.ones(shape), -(_xb(va2) + g2) * np.ones(shape),
            -_xb(c) * r * np.ones(shape)]


def coeffs_gamma_numeric(grid: PhaseGrid, fields: FieldSet) -> list[np.ndarray]:
    """gamma_i = <div(beta_i a)> for i = 1, 2, 3 from the discrete operators."""
    betas = coeffs_beta(grid, fields)
    return [gyroaverage(advect_a(b, grid, fields, weighted=False))[..., :1] for b in betas[1:]]


def contraction_rate(fields: FieldSet) -> np.ndarray:
    """c = v_wedge . grad B / (2 B)."""
    va1, va2 = drift_ExB(fields)
    return (va1 * fields.dB1 + va2 * fields.dB2) / (2.0 * fields.B)


def field_A(grid: PhaseGrid, fields: FieldSet) -> tuple:
    """Average of a along the fast flow; identically zero here."""
    alphas = coeffs_alpha(grid, fields)
    avg = [np.mean(a, axis=-1, keepdims=True) for a in alphas]
    bs = frame_fields(grid, fields)
    return tuple(sum(avg[i] * bs[i][k] for i in range(4)) for k in range(4))


def field_Btilde(grid: PhaseGrid, fields: FieldSet) -> tuple:
    """(-perp(v)/omega, v_wedge - (v.grad omega / omega^2) perp(v))."""
    om = _xb(fields.omega)
    v1, v2 = grid.v1[None, None], grid.v2[None, None]
    va1, va2 = drift_ExB(fields)
    lam = lambda0(grid, fields) * om  # -(v.grad omega)/omega^2
    return (-v2 / om, v1 / om, _xb(va1) + lam * v2, _xb(va2) - lam * v1)


def field_C(grid: PhaseGrid, fields: FieldSet) -> tuple:
    """(-(v_wedge + v_GD), -c v)."""
    va1, va2 = drift_ExB(fields)
    g1, g2 = drift_gradB(grid, fields)
    c = _xb(contraction_rate(fields))
    return (-(_xb(va1) + g1), -(_xb(va2) + g2), -c * grid.v1[None, None], -c * grid.v2[None, None])


# ---- operators ------------------------------------------------------------
def _full(a, shape):
    return np.broadcast_to(a, shape)


def div_phase(X: tuple, grid: PhaseGrid, weighted: bool = False) -> np.ndarray:
    """Discrete phase-space divergence of a 4-component field."""
    s = grid.shape
    dx = grid.div_x(np.array(_full(X[0], s)), np.array(_full(X[1], s)))
    dv = grid.div_v(np.array(_full(X[2], s)), np.array(_full(X[3], s)), weighted)
    return dx + dv


def directional(X: tuple, u: np.ndarray, grid: PhaseGrid, weighted: bool = True) -> np.ndarray:
    """X . grad u for a 4-component field X."""
    d1, d2 = grid.grad_x(u)
    g1, g2 = grid.grad_v(u, weighted)
    return X[0] * d1 + X[1] * d2 + X[2] * g1 + X[3] * g2


def advect_a(u: np.ndarray, grid: PhaseGrid, fields: FieldSet, weighted: bool = True) -> np.ndarray:
    """a . grad u = v . grad_x u + (q/m) E . grad_v u."""
    qm = fields.q / fields.m
    d1, d2 = grid.grad_x(u)
    ur = grid.d_r(u, weighted)
    ut = grid.d_theta(u) / grid.r[:, None]
    E1, E2 = _xb(fields.E1), _xb(fields.E2)
    Er = E1 * grid.cos + E2 * grid.sin
    Et = -E1 * grid.sin + E2 * grid.cos
    return grid.v1 * d1 + grid.v2 * d2 + qm * (Er * ur + Et * ut)


def apply_Btilde(u: np.ndarray, grid: PhaseGrid, fields: FieldSet, weighted: bool = True) -> np.ndarray:
    """B~ . grad u."""
    om = _xb(fields.omega)
    d1, d2 = grid.grad_x(u)
    ur = grid.d_r(u, weighted)
    ut = grid.d_theta(u)
    va1, va2 = drift_ExB(fields)
    va1, va2 = _xb(va1), _xb(va2)
    # v_wedge . grad_v u in polar form
    var = va1 * grid.cos + va2 * grid.sin
    vat = -va1 * grid.sin + va2 * grid.cos
    lam = lambda0(grid, fields) * om
    # perp(v) . grad_v = -d/dtheta
    return (-(grid.v2 * d1 - grid.v1 * d2) / om + var * ur + vat * ut / grid.r[:, None]
            - lam * ut)


def apply_C(u: np.ndarray, grid: PhaseGrid, fields: FieldSet, weighted: bool = True) -> np.ndarray:
    """C . grad u = -(v_wedge + v_GD) . grad_x u - c |v| du/d|v|."""
    C = field_C(grid, fields)
    d1, d2 = grid.grad_x(u)
    c = _xb(contraction_rate(fields))
    return C[0] * d1 + C[1] * d2 - c * grid.r[:, None] * grid.d_r(u, weighted)


def _check_gyro_invariant(f: np.ndarray, tol: float) -> None:
    dev = float(np.max(np.abs(f - f.mean(axis=-1, keepdims=True))))
    if dev > tol * max(float(np.max(np.abs(f))), 1e-300):
        raise GeometryError(f"input is not gyro-invariant (deviation {dev:.2e})")


def corrector_h1(f: np.ndarray, grid: PhaseGrid, fields: FieldSet, tol: float = 1e-8,
                 weighted: bool = True) -> np.ndarray:
    """First-order corrector h1 = -B~ . grad f for gyro-invariant f.

    ``weighted=False`` for functions that are not Maxwellian-shaped in |v|."""
    _check_gyro_invariant(f, tol)
    return -apply_Btilde(f, grid, fields, weighted)


def commutator_Qtilde1(model, f: np.ndarray) -> np.ndarray:
    """Direct evaluation of Q(B~ . grad f) - B~ . grad Q(f)."""
    grid, fields = model.grid, model.fields
    return model.apply(apply_Btilde(f, grid, fields)) - apply_Btilde(model.apply(f), grid, fields)
