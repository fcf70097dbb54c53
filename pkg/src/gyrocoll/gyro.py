"""Gyroaverage, the cyclotron generator T = omega perp(v).grad_v and its inverse.

In polar velocity coordinates ``perp(v).grad_v = -d/dtheta``, so
``T u = -omega(x) du/dtheta`` and the flow of T is a rotation of the gyro
angle.  For even ``ntheta`` the angular Nyquist mode is annihilated by the
spectral derivative; the discrete zero-average space used by ``invert_T``
excludes it.
"""

from __future__ import annotations

import numpy as np
import scipy.fft as sfft

from .fields import FieldSet
from .phasegrid import PhaseGrid


class GyroError(ValueError):
    """Input outside the domain of a gyro operator."""


def gyroaverage(u: np.ndarray) -> np.ndarray:
    """Mean over the gyro angle, broadcast back to the input shape."""
    return np.broadcast_to(u.mean(axis=-1, keepdims=True), u.shape).copy()


def decompose(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split u into its gyroaverage and the zero-average remainder."""
    a = gyroaverage(u)
    return a, u - a


def apply_T(u: np.ndarray, grid: PhaseGrid, fields: FieldSet) -> np.ndarray:
    """T u = omega perp(v).grad_v u = -omega du/dtheta."""
    return -fields.xb(fields.omega) * grid.d_theta(u)


def nyquist_part(u: np.ndarray) -> np.ndarray:
    """Angular Nyquist component of u (zero for odd-free data)."""
    n = u.shape[-1]
    sign = (-1.0) ** np.arange(n)
    return np.mean(u * sign, axis=-1, keepdims=True) * sign


def invert_T(w: np.ndarray, grid: PhaseGrid, fields: FieldSet, tol: float = 1e-10) -> np.ndarray:
    """Zero-average solution u of T u = w.

    Raises GyroError if w has a gyroaverage or an angular Nyquist component
    larger than ``tol`` times its maximum magnitude."""
    scale = max(float(np.max(np.abs(w))), 1e-300)
    avg = float(np.max(np.abs(w.mean(axis=-1))))
    nyq = float(np.max(np.abs(nyquist_part(w))))
    if avg > tol * scale:
        raise GyroError(f"right-hand side has nonzero gyroaverage ({avg / scale:.2e} relative)")
    if nyq > tol * scale:
        raise GyroError(f"right-hand side has an angular Nyquist component ({nyq / scale:.2e} relative)")
    wh = sfft.rfft(w, axis=-1)
    k = np.arange(wh.shape[-1], dtype=float)
    inv = np.zeros_like(k)
    inv[1:-1] = 1.0 / k[1:-1]
    # T -> -omega * i k in Fourier; u_k = w_k / (-i k omega) = i w_k / (k omega)
    uh = 1j * wh * inv / fields.xb(fields.omega)
    return sfft.irfft(uh, n=grid.ntheta, axis=-1)


def rotate(u: np.ndarray, angle) -> np.ndarray:
    """Evaluate the angular trigonometric interpolant of u at theta + angle.

    ``angle`` is a scalar or an array broadcastable against u.shape[:-1]
    (e.g. shape (nx1, nx2, 1)).  Integer multiples of the angular step reduce
    to exact index shifts."""
    n = u.shape[-1]
    a = np.asarray(angle, dtype=float)
    steps = a * n / (2.0 * np.pi)
    if a.ndim == 0 and abs(steps - np.round(steps)) < 1e-12:
        return np.roll(u, -int(np.round(steps)), axis=-1)
    uh = sfft.rfft(u, axis=-1)
    k = np.arange(uh.shape[-1], dtype=float)
    a_ = a[..., None]
    ph = np.exp(1j * k * a_)
    if n % 2 == 0:
        # real interpolant: the Nyquist coefficient scales by cos(n a / 2)
        ph = ph * np.ones(uh.shape[-1])
        ph[..., -1] = np.cos(0.5 * n * a_[..., 0])
    return sfft.irfft(uh * ph, n=n, axis=-1)


def flow_T(u: np.ndarray, s: float, grid: PhaseGrid, fields: FieldSet) -> np.ndarray:
    """exp(-s T) u: the solution at time s of du/dt = -T u = omega du/dtheta."""
    return rotate(u, s * fields.omega[:, :, None])


def poincare_ratio(u: np.ndarray, grid: PhaseGrid, fields: FieldSet) -> float:
    """||u - <u>|| * omega_min / ||T u|| (<= 1 on the resolved space)."""
    fl = grid.theta_filter(u)
    zt = fl - gyroaverage(fl)
    tu = apply_T(fl, grid, fields)
    num = np.sqrt(np.sum(zt**2 * grid.wv))
    den = np.sqrt(np.sum(tu**2 * grid.wv))
    if den == 0.0:
        return 0.0 if num == 0.0 else np.inf
    return float(num * fields.omega_min / den)
