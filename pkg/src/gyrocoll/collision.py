"""Linear Boltzmann collision operator and its strong-field corrections.

The kernel of the operator depends on |v - v'| only, so on the polar grid it
is a function of (r, r', theta - theta').  We store its angular Fourier
coefficients

    khat[k, j, j'] = (1/2pi) int_0^{2pi} sigma(sqrt(r^2 + r'^2 - 2 r r' cos a)) cos(k a) da

computed with a fine trapezoid rule; ``s1 = khat[0]`` and ``s2 = khat[1]``.
The gain term is then an exact angular convolution of the trigonometric
interpolant and the loss multiplier is the matching quadrature of the same
kernel against M, which makes mass conservation hold to round-off.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np
import scipy.fft as sfft

from .fields import FieldSet, drift_ExB, equilibrium
from .phasegrid import PhaseGrid


class CollisionError(ValueError):
    """Invalid cross-section or operator input."""


@dataclass(frozen=True)
class CrossSection:
    """Scattering cross-section sigma(|v - v'|).

    kind 'constant': sigma = s0
    kind 'rational': sigma = a + b / (1 + rho^2)
    """

    kind: str = "constant"
    s0: float = 1.0
    a: float = 0.0
    b: float = 0.0

    def __post_init__(self):
        if self.kind == "constant":
            if not np.isfinite(self.s0) or self.s0 < 0:
                raise CollisionError(f"sigma.s0 must be nonnegative, got {self.s0!r}")
        elif self.kind == "rational":
            if self.a < 0 or self.a + self.b < 0 or not np.isfinite(self.a + self.b):
                raise CollisionError("sigma = a + b/(1+rho^2) must be nonnegative: need a >= 0 and a + b >= 0")
        else:
            raise CollisionError(f"unknown cross-section kind {self.kind!r}")

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        rho = np.asarray(rho, dtype=float)
        if self.kind == "constant":
            return np.full_like(rho, self.s0)
        return self.a + self.b / (1.0 + rho**2)

    @property
    def sup(self) -> float:
        """S0 = sup sigma."""
        if self.kind == "constant":
            return self.s0
        return max(self.a, self.a + self.b)

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant" or self.b == 0.0


def angular_coefficients(r: np.ndarray, xs: CrossSection, nk: int, n_alpha: int) -> np.ndarray:
    """khat[k, j, j'] for k < nk, symmetric in (j, j') to the last bit.

    The value at a = 0 is split off before the transform so a constant
    cross-section yields exactly (s0, 0, 0, ...)."""
    if n_alpha < 2 * nk:
        raise CollisionError("n_alpha too small for the requested angular modes")
    alpha = 2.0 * np.pi * np.arange(n_alpha) / n_alpha
    rr = np.outer(r, r)
    sq = r[:, None] ** 2 + r[None, :] ** 2
    d2 = np.maximum(sq[None] - 2.0 * rr[None] * np.cos(alpha)[:, None, None], 0.0)
    sig = xs(np.sqrt(d2))
    ref = sig[0]
    coef = sfft.rfft(sig - ref[None], axis=0).real / n_alpha
    out = np.array(coef[:nk])
    out[0] += ref
    return out


def alpha_averages(r: np.ndarray, xs: CrossSection, n_alpha: int) -> tuple[np.ndarray, np.ndarray]:
    """(s1, s2) tables on the radial nodes."""
    k = angular_coefficients(r, xs, 2, max(n_alpha, 4))
    return k[0], k[1]


class CollisionModel:
    """Discrete Q, its commutator correction and first-order extension.

    Parameters
    ----------
    grid, fields : discretisation and static fields
    xs : cross-section
    n_alpha : angular quadrature size for the kernel tables (default 4*ntheta)
    """

    def __init__(self, grid: PhaseGrid, fields: FieldSet, xs: CrossSection, n_alpha: int | None = None):
        self.grid = grid
        self.fields = fields
        self.xs = xs
        self.tau = fields.tau
        self.n_alpha = int(n_alpha or 4 * grid.ntheta)
        self.nk = grid.ntheta // 2 + 1
        self.khat = angular_coefficients(grid.r, xs, self.nk, self.n_alpha)
        self.M = grid.maxwellian_r
        self.F = equilibrium(grid, fields)
        self.boltz = fields.boltzmann

    # ---- tables -------------------------------------------------------------
    @property
    def s1(self) -> np.ndarray:
        return self.khat[0]

    @property
    def s2(self) -> np.ndarray:
        return self.khat[1]

    @cached_property
    def _wq(self) -> np.ndarray:
        """2 pi w_j': angular-integrated radial weights."""
        return 2.0 * np.pi * self.grid.wr

    @cached_property
    def gain_blocks(self) -> np.ndarray:
        """(nk, nr, nr) matrices M_j 2 pi w_j' khat_k(j, j')."""
        return self.M[None, :, None] * self.khat * self._wq[None, None, :]

    @cached_property
    def loss(self) -> np.ndarray:
        """lambda_j = sum_j' 2 pi w_j' s1(j, j') M_j'."""
        return self.s1 @ (self._wq * self.M)

    @cached_property
    def mass_M(self) -> float:
        return float(np.sum(self._wq * self.M))

    @cached_property
    def nodal_kernel(self) -> np.ndarray:
        """kernel K[l, j, j'] at angle difference theta_l (band-limited)."""
        n = self.grid.ntheta
        return sfft.irfft(self.khat * n, n=n, axis=0)

    @cached_property
    def drift_coefficient(self) -> np.ndarray:
        """c(r) = (1/tau) int (s1 - (r'/r) s2) M(v') dv'."""
        r = self.grid.r
        c = self.s1 - (r[None, :] / r[:, None]) * self.s2
        return (c @ (self._wq * self.M)) / self.tau

    def radial_matrix(self) -> np.ndarray:
        """Q restricted to gyro-independent data: (nr, nr) matrix."""
        return (self.gain_blocks[0] - np.diag(self.loss)) / self.tau

    def spectral_gap(self) -> float:
        """Second-smallest singular value of the per-cell operator (full angular space)."""
        n = self.grid.nr * self.grid.ntheta
        A = np.empty((n, n))
        for i in range(n):
            e = np.zeros(n)
            e[i] = 1.0
            A[:, i] = self.apply(e.reshape(1, 1, self.grid.nr, self.grid.ntheta)).ravel()
        s = np.linalg.svd(A, compute_uv=False)
        return float(s[-2])

    # ---- Q ------------------------------------------------------------------
    def apply(self, f: np.ndarray) -> np.ndarray:
        """Q(f) = (1/tau) int sigma (M f' - M' f) dv'."""
        if self.xs.is_constant:
            s = self.s1[0, 0]
            rho = self.grid.integrate_v(f)
            return (s * self.M[:, None] * rho[..., None, None] - self.loss[:, None] * f) / self.tau
        fh = sfft.rfft(f, axis=-1)
        gh = np.einsum("kjJ,...Jk->...jk", self.gain_blocks, fh, optimize=True)
        gain = sfft.irfft(gh, n=self.grid.ntheta, axis=-1)
        return (gain - self.loss[:, None] * f) / self.tau

    def gain_loss(self, f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        q = self.apply(f)
        loss = self.loss[:, None] * f / self.tau
        return q + loss, loss

    # ---- corrections -------------------------------------------------------
    def _radial_profile(self, g: np.ndarray, tol: float) -> np.ndarray:
        gr = g.mean(axis=-1)
        dev = float(np.max(np.abs(g - gr[..., None])))
        if dev > tol * max(float(np.max(np.abs(g))), 1e-300):
            raise CollisionError(f"input is not gyro-invariant (deviation {dev:.2e})")
        return gr

    def apply_Qtilde1(self, g: np.ndarray, tol: float = 1e-8) -> np.ndarray:
        """Commutator correction Q~1 on gyro-invariant g (closed form)."""
        gr = self._radial_profile(g, tol)
        return self._qt1(gr)

    def _qt1(self, gr: np.ndarray) -> np.ndarray:
        grid, fl = self.grid, self.fields
        r = grid.r
        Fr = self.boltz[..., None] * self.M  # (nx1, nx2, nr)
        u = gr / Fr
        p1, p2 = grid.grad_x(u)
        p1 *= Fr
        p2 *= Fr
        C1 = (self.s1 - (r[None, :] / r[:, None]) * self.s2) * self._wq[None, :]
        y1 = p1 @ C1.T
        y2 = p2 @ C1.T
        om = fl.omega[..., None, None]
        pv_y = r[:, None] * (grid.sin * y1[..., None] - grid.cos * y2[..., None])
        out = self.M[:, None] * pv_y / om
        if not self.xs.is_constant:
            C2 = (r[None, :] / r[:, None]) * self.s2 * self._wq[None, :]
            t2 = (gr) @ C2.T - u * (Fr @ C2.T)
            a1, a2 = drift_ExB(fl)
            vva = r[:, None] * (grid.cos * a1[..., None, None] + grid.sin * a2[..., None, None])
            out = out + (fl.m / fl.theta_T) * vva * self.M[:, None] * t2[..., None]
        return out / self.tau

    def apply_Q1(self, f: np.ndarray) -> np.ndarray:
        """Entropy-compatible extension Q1(f) = Q~1(<f>) + Q1(f - <f>)."""
        grid, fl = self.grid, self.fields
        r = grid.r
        fr = f.mean(axis=-1)
        h = f - fr[..., None]
        out = self._qt1(fr)
        # gyro-invariant part driven by the fluctuation
        hv1 = (h * grid.v1).mean(axis=-1)
        hv2 = (h * grid.v2).mean(axis=-1)
        om = fl.omega[..., None]
        z = grid.div_x(hv2 / om, -hv1 / om)
        C3 = (self.s1 - (r[:, None] / r[None, :]) * self.s2) * self._wq[None, :]
        t3 = self.M * (z @ C3.T)
        if not self.xs.is_constant:
            a1, a2 = drift_ExB(fl)
            ah = a1[..., None] * hv1 + a2[..., None] * hv2
            S2w = self.s2 * self._wq[None, :]
            t4 = r * self.M * ((ah / r) @ S2w.T) - (ah / r) * (S2w @ (r * self.M))
            t3 = t3 - (fl.m / fl.theta_T) * t4
        return out + t3[..., None] / self.tau

    def apply_full(self, f: np.ndarray, eps: float) -> np.ndarray:
        """(Q + eps Q1) f."""
        out = self.apply(f)
        if eps:
            out = out + eps * self.apply_Q1(f)
        return out

    # ---- entropy -------------------------------------------------------------
    def entropy_report(self, f: np.ndarray, H: str | Callable = "quadratic",
                       dH: Callable | None = None) -> tuple[float, float]:
        """Relative entropy int F H(f/F) and its collisional dissipation.

        ``H`` is ``'quadratic'`` (u^2, dissipation from the symmetric form
        -2 (Q f, f)_F), ``'ulogu'`` (u log u, requires f >= -1e-14) or a
        convex callable with derivative ``dH``.  Non-quadratic entropies are
        evaluated pairwise cell by cell."""
        grid, F = self.grid, self.F
        u = f / F
        if isinstance(H, str):
            if H == "quadratic":
                ent = grid.integrate(F * u**2)
                dis = -2.0 * grid.inner(self.apply(f), f, F)
                return float(ent), float(dis)
            if H != "ulogu":
                raise CollisionError(f"unknown entropy {H!r}; expected 'quadratic' or 'ulogu'")
            if np.min(f) < -1e-14:
                raise CollisionError(f"u log u entropy needs f >= 0, min(f) = {np.min(f):.3e}")
            u = np.maximum(u, 0.0)
            tiny = np.finfo(float).tiny

            def H(w):
                return np.where(w > 0, w * np.log(np.maximum(w, tiny)), 0.0)

            def dH(w):
                return np.log(np.maximum(w, tiny)) + 1.0
        elif dH is None:
            raise CollisionError("dH is required with a custom H")
        ent = grid.integrate(F * H(u))
        K = self.nodal_kernel  # (l, j, j')
        nt = grid.ntheta
        L = (np.arange(nt)[:, None] - np.arange(nt)[None, :]) % nt
        Kfull = K[L]  # (l, l', j, j')
        Kfull = np.transpose(Kfull, (2, 0, 3, 1)).reshape(grid.nr * nt, grid.nr * nt)
        w = grid.wv.ravel()
        Mv = np.repeat(self.M, nt)
        total = 0.0
        for i1 in range(grid.nx1):
            for i2 in range(grid.nx2):
                uc = u[i1, i2].ravel()
                Fc = F[i1, i2].ravel()
                Dm = H(uc)[None, :] - H(uc)[:, None] - (uc[None, :] - uc[:, None]) * dH(uc)[:, None]
                total += np.einsum("i,j,ij,ij->", w * Mv, w * Fc, Kfull, Dm)
        dis = total * grid.cell_area / self.tau
        return float(ent), float(dis)

    def kernel_residual(self, eps: float) -> float:
        """||(Q + eps Q1) F||_F / ||F||_F."""
        res = self.apply_full(self.F, eps)
        return self.grid.norm(res, self.F) / self.grid.norm(self.F, self.F)


def assemble(op: Callable[[np.ndarray], np.ndarray], shape: tuple) -> np.ndarray:
    """Dense matrix of a linear operator on arrays of the given shape."""
    n = int(np.prod(shape))
    A = np.empty((n, n))
    e = np.zeros(n)
    for i in range(n):
        e[i] = 1.0
        A[:, i] = op(e.reshape(shape)).ravel()
        e[i] = 0.0
    return A


def null_space_dimension(A: np.ndarray, rtol: float = 1e-9) -> tuple[int, np.ndarray]:
    """Number of singular values below rtol * largest, and all singular values."""
    s = np.linalg.svd(A, compute_uv=False)
    return int(np.sum(s < rtol * s[0])), s
