"""Static electromagnetic fields, equilibria and drift velocities.

Conventions: ``perp(a) = (a2, -a1)``; the cyclotron frequency is
``omega = q B / m``.  The electric field is obtained from the potential with
the same spectral gradient used by the transport operators.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .phasegrid import PhaseGrid


class FieldError(ValueError):
    """Invalid field configuration."""


def perp(a1, a2):
    """Rotate a planar vector by -pi/2: (a1, a2) -> (a2, -a1)."""
    return a2, -a1


@dataclass(frozen=True)
class Profile:
    """Catalogued scalar profile on the periodic box.

    kind 'constant':  mean
    kind 'harmonic':  mean + amp * cos(2 pi (k1 x1/L1 + k2 x2/L2) + phase)
    kind 'product':   mean + amp * cos(2 pi k1 x1/L1 + phase) * cos(2 pi k2 x2/L2 + phase2)
    """

    kind: str = "constant"
    mean: float = 0.0
    amp: float = 0.0
    k1: int = 0
    k2: int = 0
    phase: float = 0.0
    phase2: float = 0.0

    def evaluate(self, grid: PhaseGrid) -> np.ndarray:
        X1, X2 = np.meshgrid(grid.x1, grid.x2, indexing="ij")
        a1 = 2.0 * np.pi * self.k1 * X1 / grid.L1
        a2 = 2.0 * np.pi * self.k2 * X2 / grid.L2
        if self.kind == "constant":
            return np.full(grid.xshape, float(self.mean))
        if self.kind == "harmonic":
            return self.mean + self.amp * np.cos(a1 + a2 + self.phase)
        if self.kind == "product":
            return self.mean + self.amp * np.cos(a1 + self.phase) * np.cos(a2 + self.phase2)
        raise FieldError(f"unknown profile kind {self.kind!r}")

    def is_constant(self) -> bool:
        return self.kind == "constant" or self.amp == 0.0 or (self.k1 == 0 and self.k2 == 0)


@dataclass(frozen=True)
class FieldConfig:
    """Potential and magnetic-field profiles plus species constants."""

    phi: Profile = field(default_factory=lambda: Profile("product", 0.0, 0.05, 1, 1))
    B: Profile = field(default_factory=lambda: Profile("harmonic", 1.0, 0.2, 1, 0))
    charge: float = 1.0
    mass: float = 1.0
    temperature: float = 1.0
    tau: float = 1.0


@dataclass
class FieldSet:
    """Fields evaluated on a grid; all arrays have shape (nx1, nx2)."""

    config: FieldConfig
    phi: np.ndarray
    E1: np.ndarray
    E2: np.ndarray
    B: np.ndarray
    dB1: np.ndarray
    dB2: np.ndarray

    @property
    def q(self) -> float:
        return self.config.charge

    @property
    def m(self) -> float:
        return self.config.mass

    @property
    def theta_T(self) -> float:
        return self.config.temperature

    @property
    def tau(self) -> float:
        return self.config.tau

    @property
    def omega(self) -> np.ndarray:
        return self.q * self.B / self.m

    @property
    def omega_min(self) -> float:
        return float(np.min(np.abs(self.omega)))

    @property
    def uniform_B(self) -> bool:
        return bool(np.ptp(self.B) == 0.0)

    @property
    def boltzmann(self) -> np.ndarray:
        """exp(-q phi / theta)."""
        return np.exp(-self.q * self.phi / self.theta_T)

    def xb(self, a: np.ndarray) -> np.ndarray:
        """Broadcast an (nx1, nx2) array against (nx1, nx2, nr, ntheta)."""
        return a[:, :, None, None]


def build_fields(config: FieldConfig, grid: PhaseGrid) -> FieldSet:
    """Evaluate the catalogued profiles and their spectral gradients."""
    for name in ("mass", "temperature", "tau"):
        val = getattr(config, name)
        if not np.isfinite(val) or val <= 0:
            raise FieldError(f"fields.{name} must be positive, got {val!r}")
    if not np.isfinite(config.charge) or config.charge == 0:
        raise FieldError(f"fields.charge must be nonzero, got {config.charge!r}")
    if abs(grid.mass - config.mass) > 1e-14 * config.mass or abs(grid.temperature - config.temperature) > 1e-14 * config.temperature:
        raise FieldError("grid and field species constants differ (mass/temperature)")
    phi = config.phi.evaluate(grid)
    B = config.B.evaluate(grid)
    if not np.all(np.isfinite(phi)):
        raise FieldError("fields.phi is not finite")
    if not np.all(np.isfinite(B)) or np.min(B) <= 0:
        raise FieldError(f"fields.B must be positive everywhere, min is {np.min(B):.3g}")
    d1, d2 = grid.grad_x(phi)
    b1, b2 = grid.grad_x(B)
    return FieldSet(config, phi, -d1, -d2, B, b1, b2)


def maxwellian(grid: PhaseGrid, fields: FieldSet | None = None) -> np.ndarray:
    """Normalised Maxwellian on the velocity nodes, shape (nr, ntheta)."""
    return np.broadcast_to(grid.maxwellian_r[:, None], (grid.nr, grid.ntheta))


def equilibrium(grid: PhaseGrid, fields: FieldSet) -> np.ndarray:
    """F = M(v) exp(-q phi / theta) on the full grid."""
    return fields.xb(fields.boltzmann) * maxwellian(grid)[None, None]


def drift_ExB(fields: FieldSet) -> tuple[np.ndarray, np.ndarray]:
    """Electric cross-field drift perp(E) / B."""
    a1, a2 = perp(fields.E1, fields.E2)
    return a1 / fields.B, a2 / fields.B


def drift_gradB(grid: PhaseGrid, fields: FieldSet) -> tuple[np.ndarray, np.ndarray]:
    """Magnetic-gradient drift -(|v|^2 / 2 omega) perp(grad B) / B.

    Returned arrays have shape (nx1, nx2, nr, 1)."""
    p1, p2 = perp(fields.dB1, fields.dB2)
    c = -1.0 / (2.0 * fields.omega * fields.B)
    r2 = (grid.r**2)[None, None, :, None]
    return fields.xb(c * p1) * r2, fields.xb(c * p2) * r2


def drift_collision(grid: PhaseGrid, fields: FieldSet, coefficient: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Collisional drift -c(|v|) perp(v) / omega.

    ``coefficient`` is the radial profile c(r) (``CollisionModel.drift_coefficient``);
    for a constant cross-section it equals s/tau."""
    c = np.asarray(coefficient)[:, None]
    w = fields.xb(1.0 / fields.omega)
    p1, p2 = grid.v2, -grid.v1
    return -w * (c * p1)[None, None], -w * (c * p2)[None, None]
