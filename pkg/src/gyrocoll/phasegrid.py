"""Phase-space grid, quadrature and discrete differential operators.

Arrays on the grid are laid out as ``f[i1, i2, j, l]`` with ``(i1, i2)`` the
periodic spatial indices, ``j`` the radial speed index and ``l`` the gyro-angle
index.  Velocity is ``v = r (cos theta, sin theta)``.

Spatial and angular derivatives are Fourier-spectral.  Radial derivatives use
a centred finite-difference stencil of configurable even order; values at
negative radius come from the parity relation ``u(-r, theta) = u(r, theta+pi)``
and the last few nodes use one-sided stencils.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft

_WORKERS = 1


def set_workers(n: int) -> None:
    """Set the thread count used for FFTs."""
    global _WORKERS
    _WORKERS = max(1, int(n))


class GridError(ValueError):
    """Invalid grid parameters."""


def fd_weights(x0: float, x: np.ndarray, m: int) -> np.ndarray:
    """Finite-difference weights for the m-th derivative at x0 (Fornberg)."""
    n = len(x)
    c = np.zeros((m + 1, n))
    c1 = 1.0
    c4 = x[0] - x0
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = x[i] - x0
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[k, i] = c1 * (k * c[k - 1, i - 1] - c5 * c[k, i - 1]) / c2
                c[0, i] = -c1 * c5 * c[0, i - 1] / c2
            for k in range(mn, 0, -1):
                c[k, j] = (c4 * c[k, j] - k * c[k - 1, j]) / c3
            c[0, j] = c4 * c[0, j] / c3
        c1 = c2
    return c[m]


def radial_weights(nr: int, r_max: float) -> np.ndarray:
    """Weights w_j with sum_j w_j g(r_j) ~ int_0^R g(r) r dr.

    The rule is exact for the cosine modes cos(pi m r / R), m < nr, sampled on
    the cell-centred nodes, so it is spectrally accurate for even profiles
    that flatten at R (any decaying distribution)."""
    h = r_max / nr
    r = (np.arange(nr) + 0.5) * h
    m = np.arange(nr)
    kappa = np.pi * m / r_max
    moments = np.empty(nr)
    moments[0] = 0.5 * r_max**2
    moments[1:] = ((-1.0) ** m[1:] - 1.0) / kappa[1:] ** 2
    basis = np.cos(np.outer(r, kappa))
    return np.linalg.solve(basis.T, moments)


@dataclass(frozen=True)
class PhaseGrid:
    """Tensor grid over the periodic box [0,L1)x[0,L2) and the velocity disk.

    Parameters
    ----------
    nx1, nx2 : spatial node counts
    nr, ntheta : radial and angular node counts (ntheta even)
    L1, L2 : box lengths
    r_max : velocity truncation radius
    mass, temperature : species constants defining the Maxwellian used both
        for the truncation check and as the factoring weight in radial
        derivatives of distribution functions
    fd_order : order of the radial finite-difference stencil
    """

    nx1: int
    nx2: int
    nr: int
    ntheta: int
    L1: float = 1.0
    L2: float = 1.0
    r_max: float = 6.5
    mass: float = 1.0
    temperature: float = 1.0
    fd_order: int = 8
    meta: dict = field(default_factory=dict, compare=False)

    # ---- nodes -----------------------------------------------------------
    @cached_property
    def x1(self) -> np.ndarray:
        return np.arange(self.nx1) * (self.L1 / self.nx1)

    @cached_property
    def x2(self) -> np.ndarray:
        return np.arange(self.nx2) * (self.L2 / self.nx2)

    @property
    def dr(self) -> float:
        return self.r_max / self.nr

    @cached_property
    def r(self) -> np.ndarray:
        return (np.arange(self.nr) + 0.5) * self.dr

    @property
    def dtheta(self) -> float:
        return 2.0 * np.pi / self.ntheta

    @cached_property
    def theta(self) -> np.ndarray:
        return np.arange(self.ntheta) * self.dtheta

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return (self.nx1, self.nx2, self.nr, self.ntheta)

    @property
    def xshape(self) -> tuple[int, int]:
        return (self.nx1, self.nx2)

    @property
    def cell_area(self) -> float:
        return (self.L1 / self.nx1) * (self.L2 / self.nx2)

    # broadcastable velocity factors, shape (nr, ntheta)
    @cached_property
    def R(self) -> np.ndarray:
        return np.broadcast_to(self.r[:, None], (self.nr, self.ntheta))

    @cached_property
    def cos(self) -> np.ndarray:
        return np.cos(self.theta)[None, :]

    @cached_property
    def sin(self) -> np.ndarray:
        return np.sin(self.theta)[None, :]

    @cached_property
    def v1(self) -> np.ndarray:
        return self.r[:, None] * self.cos

    @cached_property
    def v2(self) -> np.ndarray:
        return self.r[:, None] * self.sin

    # ---- quadrature --------------------------------------------------------
    @cached_property
    def wr(self) -> np.ndarray:
        return radial_weights(self.nr, self.r_max)

    @cached_property
    def wv(self) -> np.ndarray:
        """Velocity quadrature weights, shape (nr, ntheta)."""
        return np.broadcast_to((self.wr * self.dtheta)[:, None], (self.nr, self.ntheta)).copy()

    @cached_property
    def maxwellian_r(self) -> np.ndarray:
        """Normalised Maxwellian m/(2 pi T) exp(-m r^2 / 2T) on radial nodes."""
        a = self.mass / self.temperature
        return a / (2.0 * np.pi) * np.exp(-0.5 * a * self.r**2)

    def integrate_v(self, f: np.ndarray) -> np.ndarray:
        """Velocity integral over the last two axes."""
        return np.tensordot(f, self.wv, axes=([-2, -1], [0, 1]))

    def integrate_x(self, g: np.ndarray) -> np.ndarray:
        return g.sum(axis=(0, 1)) * self.cell_area

    def integrate(self, f: np.ndarray) -> float:
        return float(self.integrate_x(self.integrate_v(f)))

    def moments(self, f: np.ndarray) -> dict:
        """Density, current (2, nx1, nx2) and kinetic-energy density."""
        rho = self.integrate_v(f)
        j = np.stack([self.integrate_v(f * self.v1), self.integrate_v(f * self.v2)])
        energy = 0.5 * self.integrate_v(f * self.r[:, None] ** 2)
        return {"rho": rho, "j": j, "energy": energy}

    # ---- spatial spectral derivatives --------------------------------------
    @cached_property
    def _kx(self) -> tuple[np.ndarray, np.ndarray]:
        k1 = 2.0 * np.pi * sfft.fftfreq(self.nx1, d=self.L1 / self.nx1)
        k2 = 2.0 * np.pi * sfft.rfftfreq(self.nx2, d=self.L2 / self.nx2)
        if self.nx1 % 2 == 0:
            k1[self.nx1 // 2] = 0.0
        if self.nx2 % 2 == 0:
            k2[-1] = 0.0
        return k1, k2

    def _xshape_pad(self, a: np.ndarray, k: np.ndarray, axis: int) -> np.ndarray:
        shp = [1] * a.ndim
        shp[axis] = len(k)
        return k.reshape(shp)

    def grad_x(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Spectral gradient over the first two axes (Nyquist mode dropped)."""
        k1, k2 = self._kx
        uh = sfft.rfft2(u, axes=(0, 1), workers=_WORKERS)
        s = (self.nx1, self.nx2)
        d1 = sfft.irfft2(1j * self._xshape_pad(uh, k1, 0) * uh, s=s, axes=(0, 1), workers=_WORKERS)
        d2 = sfft.irfft2(1j * self._xshape_pad(uh, k2, 1) * uh, s=s, axes=(0, 1), workers=_WORKERS)
        return d1, d2

    def div_x(self, g1: np.ndarray, g2: np.ndarray) -> np.ndarray:
        """Spectral divergence of (g1, g2) over the first two axes."""
        k1, k2 = self._kx
        s = (self.nx1, self.nx2)
        h = 1j * self._xshape_pad(g1, k1, 0) * sfft.rfft2(g1, axes=(0, 1), workers=_WORKERS)
        h += 1j * self._xshape_pad(g2, k2, 1) * sfft.rfft2(g2, axes=(0, 1), workers=_WORKERS)
        return sfft.irfft2(h, s=s, axes=(0, 1), workers=_WORKERS)

    def xfilter(self, u: np.ndarray) -> np.ndarray:
        """Remove spatial Nyquist content (the part invisible to grad_x)."""
        out = u
        if self.nx1 % 2 == 0:
            uh = sfft.fft(u, axis=0, workers=_WORKERS)
            uh[self.nx1 // 2] = 0.0
            out = sfft.ifft(uh, axis=0, workers=_WORKERS).real
        if self.nx2 % 2 == 0:
            uh = sfft.rfft(out, axis=1, workers=_WORKERS)
            uh[:, -1] = 0.0
            out = sfft.irfft(uh, n=self.nx2, axis=1, workers=_WORKERS)
        return out

    # ---- angular spectral derivative -----------------------------------------
    @cached_property
    def _ktheta(self) -> np.ndarray:
        k = np.arange(self.ntheta // 2 + 1, dtype=float)
        k[-1] = 0.0  # Nyquist (ntheta even)
        return k

    def d_theta(self, u: np.ndarray) -> np.ndarray:
        uh = sfft.rfft(u, axis=-1, workers=_WORKERS)
        uh *= 1j * self._ktheta
        return sfft.irfft(uh, n=self.ntheta, axis=-1, workers=_WORKERS)

    def theta_filter(self, u: np.ndarray) -> np.ndarray:
        """Remove the angular Nyquist mode."""
        uh = sfft.rfft(u, axis=-1, workers=_WORKERS)
        uh[..., -1] = 0.0
        return sfft.irfft(uh, n=self.ntheta, axis=-1, workers=_WORKERS)

    # ---- radial finite differences ------------------------------------------
    @cached_property
    def _dr_matrix(self) -> np.ndarray:
        """(nr, nr + q) stencil matrix acting on [ghosts q-1..0, nodes]."""
        p = self.fd_order
        q = p // 2
        h = self.dr
        ext = np.concatenate([-(np.arange(q)[::-1] + 0.5) * h, self.r])
        D = np.zeros((self.nr, self.nr + q))
        for j in range(self.nr):
            c = j + q
            lo, hi = c - q, c + q + 1
            if hi > self.nr + q:
                hi = self.nr + q
                lo = hi - (p + 1)
            D[j, lo:hi] = fd_weights(ext[c], ext[lo:hi], 1)
        return D

    def _radial_extend(self, u: np.ndarray) -> np.ndarray:
        q = self.fd_order // 2
        ghost = np.roll(u[..., :q, :], self.ntheta // 2, axis=-1)[..., ::-1, :]
        return np.concatenate([ghost, u], axis=-2)

    def d_r(self, u: np.ndarray, weighted: bool = True) -> np.ndarray:
        """Radial derivative along axis -2.

        With ``weighted`` the stencil acts on u/M and the Maxwellian factor is
        differentiated exactly, so Maxwellian-times-polynomial data is
        differentiated to round-off.  Use ``weighted=False`` for coefficient
        fields that grow polynomially in |v|."""
        D = self._dr_matrix
        if not weighted:
            return D @ self._radial_extend(u)
        a = self.mass / self.temperature
        w = np.exp(-0.5 * a * self.r**2)[:, None]
        du = D @ self._radial_extend(u / w)
        return w * du - a * self.r[:, None] * u

    def grad_v(self, u: np.ndarray, weighted: bool = True) -> tuple[np.ndarray, np.ndarray]:
        """Cartesian velocity gradient via the polar chain rule."""
        ur = self.d_r(u, weighted)
        ut = self.d_theta(u) / self.r[:, None]
        return self.cos * ur - self.sin * ut, self.sin * ur + self.cos * ut

    def div_v(self, g1: np.ndarray, g2: np.ndarray, weighted: bool = True) -> np.ndarray:
        """Velocity divergence of a Cartesian vector field."""
        rr = self.r[:, None]
        gr = self.cos * g1 + self.sin * g2
        gt = -self.sin * g1 + self.cos * g2
        return (self.d_r(rr * gr, weighted) + self.d_theta(gt)) / rr

    # ---- norms -------------------------------------------------------------
    def inner(self, f: np.ndarray, g: np.ndarray, weight: np.ndarray | None = None) -> float:
        """Discrete L2 inner product, optionally divided by a weight (e.g. F)."""
        h = f * g if weight is None else f * g / weight
        return self.integrate(h)

    def norm(self, f: np.ndarray, weight: np.ndarray | None = None) -> float:
        return float(np.sqrt(max(self.inner(f, f, weight), 0.0)))


def build_grid(
    nx1: int = 32,
    nx2: int = 32,
    L1: float = 1.0,
    L2: float = 1.0,
    nr: int = 32,
    ntheta: int = 32,
    r_max: float = 6.5,
    mass: float = 1.0,
    temperature: float = 1.0,
    fd_order: int | None = None,
    tol_mass: float = 1e-8,
) -> PhaseGrid:
    """Validate parameters and build a PhaseGrid.

    ``fd_order`` defaults to the highest even order up to 8 that fits nr.
    Raises GridError if a count is too small, if ntheta is odd, or if the
    truncated Maxwellian mass differs from one by more than ``tol_mass``."""
    for name, n, lo in (("nx1", nx1, 2), ("nx2", nx2, 2), ("nr", nr, 3), ("ntheta", ntheta, 8)):
        if int(n) != n or n < lo:
            raise GridError(f"grid.{name} must be an integer >= {lo}, got {n!r}")
    if fd_order is None:
        fd_order = min(8, 2 * ((int(nr) - 1) // 2))
    if ntheta % 2:
        raise GridError(f"grid.ntheta must be even, got {ntheta}")
    if fd_order < 2 or fd_order % 2:
        raise GridError(f"grid.fd_order must be a positive even integer, got {fd_order}")
    if nr < fd_order + 1:
        raise GridError(f"grid.nr must be >= fd_order + 1 = {fd_order + 1}, got {nr}")
    for name, val in (("L1", L1), ("L2", L2), ("r_max", r_max), ("mass", mass), ("temperature", temperature)):
        if not np.isfinite(val) or val <= 0:
            raise GridError(f"grid.{name} must be positive, got {val!r}")
    g = PhaseGrid(int(nx1), int(nx2), int(nr), int(ntheta), float(L1), float(L2), float(r_max),
                  float(mass), float(temperature), int(fd_order))
    mass_err = abs(float(np.sum(g.wr * g.maxwellian_r)) * 2.0 * np.pi - 1.0)
    if mass_err > tol_mass:
        raise GridError(
            f"grid.r_max={r_max} too small for temperature {temperature}: "
            f"Maxwellian mass error {mass_err:.3e} exceeds {tol_mass:.1e}"
        )
    return g
