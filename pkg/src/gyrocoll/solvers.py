"""Time integration of the full, first-order and second-order models.

Full model (fast rotation with frequency omega/eps)::

    df/dt = (omega/eps) df/dtheta - a . grad f + Q f,    a = (v, q E / m)

First-order limit::

    df/dt = Q f,    f gyro-invariant

Second-order drift-collision model (constant cross-section)::

    df/dt = -eps [div_x((v_wedge + v_GD) f) + c div_v(v f)] + Q f + eps Q1 f

with ``c = v_wedge . grad B / (2B)``.  The drift terms are written in
conservative form, which equals the advective form because the phase-space
field ``(v_wedge + v_GD, c v)`` is divergence free.

Velocity-space transport terms pass through a per-cell mass fix that removes
the small quadrature defect of the radial stencil by subtracting a multiple
of M; mass is then conserved to round-off.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .collision import CollisionModel
from .fields import FieldSet, drift_ExB, drift_gradB
from .geomfields import advect_a, contraction_rate, corrector_h1, GeometryError
from .gyro import rotate
from .phasegrid import PhaseGrid

MODELS = ("full", "first_order", "second_order")
FULL_SCHEMES = ("lawson", "strang", "rk4")
# RK4 stability interval on the imaginary axis
RK4_IMAG = 2.0 * np.sqrt(2.0)


class SolverError(ValueError):
    """Invalid solver setup (a precondition failed)."""


class NumericalFailure(RuntimeError):
    """Non-finite values appeared during a run."""

    def __init__(self, msg: str, step: int):
        super().__init__(msg)
        self.step = step


@dataclass(frozen=True)
class SolverSpec:
    """Run parameters.

    model : 'full', 'first_order' or 'second_order'
    dt, t_end : time step and final time
    eps : small parameter (full and second_order)
    scheme : full model integrator, 'lawson' (integrating-factor RK4 with the
        exact rotation), 'strang' (rotation / RK4 / rotation) or 'rk4'
        (fully explicit, stability-limited by the rotation)
    relax : first-order integrator, 'expm' or 'midpoint'
    diag_every : diagnostics cadence in steps
    check_cfl : enforce the explicit stability bounds before running
    """

    model: str = "full"
    dt: float = 1e-3
    t_end: float = 0.5
    eps: float = 0.1
    scheme: str = "lawson"
    relax: str = "expm"
    diag_every: int = 10
    check_cfl: bool = True

    def __post_init__(self):
        if self.model not in MODELS:
            raise SolverError(f"solver.model must be one of {MODELS}, got {self.model!r}")
        if self.scheme not in FULL_SCHEMES:
            raise SolverError(f"solver.scheme must be one of {FULL_SCHEMES}, got {self.scheme!r}")
        if self.relax not in ("expm", "midpoint"):
            raise SolverError(f"solver.relax must be 'expm' or 'midpoint', got {self.relax!r}")
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise SolverError(f"solver.dt must be positive, got {self.dt!r}")
        if not (np.isfinite(self.t_end) and self.t_end >= 0):
            raise SolverError(f"run.t_end must be nonnegative, got {self.t_end!r}")
        if self.model != "first_order" and not (np.isfinite(self.eps) and self.eps > 0):
            raise SolverError(f"fields.eps must be positive, got {self.eps!r}")
        if int(self.diag_every) != self.diag_every or self.diag_every < 1:
            raise SolverError(f"run.diag_every must be a positive integer, got {self.diag_every!r}")

    @property
    def nsteps(self) -> int:
        n = self.t_end / self.dt
        k = int(np.round(n))
        if abs(n - k) > 1e-9 * max(1.0, n):
            raise SolverError(f"run.t_end={self.t_end} is not a multiple of solver.dt={self.dt}")
        return k


# ---- initial data -------------------------------------------------------
def prepare_initial(f_in: np.ndarray, order: int, eps: float, grid: PhaseGrid, fields: FieldSet,
                    tol: float = 1e-10) -> np.ndarray:
    """Well-prepared data: order 0 returns f_in, order 1 adds eps * h1."""
    if order == 0:
        return np.array(f_in, copy=True)
    if order != 1:
        raise SolverError(f"initial-data order must be 0 or 1, got {order!r}")
    try:
        h1 = corrector_h1(f_in, grid, fields, tol=tol)
    except GeometryError as exc:
        raise SolverError(f"initial data must be gyro-invariant for order 1: {exc}") from None
    return f_in + eps * h1


# ---- shared pieces ------------------------------------------------------------
class _Base:
    def __init__(self, grid: PhaseGrid, fields: FieldSet, collision: CollisionModel):
        self.grid = grid
        self.fields = fields
        self.coll = collision
        self.M = collision.M
        self.mass_M = collision.mass_M
        self.timings: dict[str, float] = {}

    def _tic(self, name: str, t0: float) -> None:
        self.timings[name] = self.timings.get(name, 0.0) + time.perf_counter() - t0

    def _mass_fix(self, dv: np.ndarray) -> np.ndarray:
        defect = self.grid.integrate_v(dv)
        return dv - (defect / self.mass_M)[..., None, None] * self.M[:, None]


class FullModel(_Base):
    """Stiff kinetic model with the fast cyclotron rotation."""

    def __init__(self, grid, fields, collision, eps: float):
        super().__init__(grid, fields, collision)
        self.eps = float(eps)
        self.qm = fields.q / fields.m
        xb = fields.xb
        self._E = (xb(fields.E1), xb(fields.E2))
        self._Er = self._E[0] * grid.cos + self._E[1] * grid.sin
        self._Et = (-self._E[0] * grid.sin + self._E[1] * grid.cos) / grid.r[:, None]

    # operators
    def transport(self, f: np.ndarray) -> np.ndarray:
        """-a . grad f with the mass-fixed velocity part."""
        g = self.grid
        d1, d2 = g.grad_x(f)
        xpart = g.v1 * d1 + g.v2 * d2
        vpart = self.qm * (self._Er * g.d_r(f) + self._Et * g.d_theta(f))
        return -(xpart + self._mass_fix(vpart))

    def slow(self, f: np.ndarray) -> np.ndarray:
        t0 = time.perf_counter()
        tr = self.transport(f)
        self._tic("transport", t0)
        t0 = time.perf_counter()
        q = self.coll.apply(f)
        self._tic("collision", t0)
        return tr + q

    def fast(self, f: np.ndarray) -> np.ndarray:
        """(omega/eps) df/dtheta."""
        return self.fields.xb(self.fields.omega) / self.eps * self.grid.d_theta(f)

    def rhs(self, f: np.ndarray) -> np.ndarray:
        return self.slow(f) + self.fast(f)

    def rotation(self, f: np.ndarray, h: float) -> np.ndarray:
        """Exact flow of the fast term over time h."""
        t0 = time.perf_counter()
        om = self.fields.omega
        if self.fields.uniform_B:
            out = rotate(f, float(om.flat[0]) * h / self.eps)
        else:
            out = rotate(f, (om * (h / self.eps))[:, :, None])
        self._tic("rotation", t0)
        return out

    # steppers
    def step(self, f: np.ndarray, dt: float, scheme: str = "lawson") -> np.ndarray:
        if scheme == "lawson":
            return self._lawson(f, dt)
        if scheme == "strang":
            return self.rotation(_rk4(self.slow, self.rotation(f, 0.5 * dt), dt), 0.5 * dt)
        return _rk4(self.rhs, f, dt)

    def _lawson(self, f, h):
        E = self.rotation
        k1 = self.slow(f)
        fh = E(f, 0.5 * h)
        k2 = self.slow(E(f + 0.5 * h * k1, 0.5 * h))
        k3 = self.slow(fh + 0.5 * h * k2)
        k4 = self.slow(E(f, h) + h * E(k3, 0.5 * h))
        return E(f + h / 6.0 * k1, h) + E(h / 3.0 * (k2 + k3), 0.5 * h) + h / 6.0 * k4

    # stability bookkeeping
    def transport_rate(self) -> float:
        """Upper estimate of the spectral radius of the transport operator."""
        g = self.grid
        k1, k2 = g._kx
        kx = np.hypot(np.max(np.abs(k1)), np.max(np.abs(k2)))
        emax = float(np.max(np.hypot(self.fields.E1, self.fields.E2))) * abs(self.qm)
        kth = g.ntheta // 2 - 1
        return kx * g.r_max + emax * (2.0 / g.dr + kth / g.r[0])

    def fast_rate(self) -> float:
        return float(np.max(np.abs(self.fields.omega))) * (self.grid.ntheta // 2 - 1) / self.eps

    def check(self, dt: float, scheme: str) -> None:
        g = self.grid
        s0 = self.coll.xs.sup
        if s0 > 0 and dt > self.fields.tau / (2.0 * s0) * (1 + 1e-12):
            raise SolverError(f"stage collision: dt={dt:g} exceeds tau/(2 S0)={self.fields.tau / (2 * s0):g}")
        if scheme == "rk4":
            rate = self.fast_rate() + self.transport_rate()
            if dt * rate > RK4_IMAG:
                raise SolverError(f"stage rotation: explicit CFL violated, dt={dt:g} > {RK4_IMAG / rate:g}")
            return
        if dt * self.transport_rate() > RK4_IMAG:
            raise SolverError(f"stage transport: CFL violated, dt={dt:g} > {RK4_IMAG / self.transport_rate():g}")
        if self.fields.uniform_B:
            om = float(self.fields.omega.flat[0])
            for frac in (0.5, 1.0):
                shift = om * frac * dt / self.eps / g.dtheta
                if abs(shift - np.round(shift)) > 1e-9 * max(1.0, abs(shift)):
                    raise SolverError(
                        "stage rotation: omega*dt/(2 eps) must be an integer multiple of the angular step "
                        f"(got {om * 0.5 * dt / self.eps / g.dtheta:.6g} steps)")


class FirstOrderModel(_Base):
    """Homogeneous relaxation df/dt = Q f on gyro-invariant data."""

    def __init__(self, grid, fields, collision, relax: str = "expm"):
        super().__init__(grid, fields, collision)
        self.relax = relax
        self.A = collision.radial_matrix()
        self._cache: dict[float, np.ndarray] = {}

    def propagator(self, dt: float) -> np.ndarray:
        if dt not in self._cache:
            A = self.A
            if self.relax == "expm":
                P = sla.expm(dt * A)
            else:
                n = A.shape[0]
                P = np.linalg.solve(np.eye(n) - 0.5 * dt * A, np.eye(n) + 0.5 * dt * A)
            self._cache[dt] = P
        return self._cache[dt]

    def step(self, f: np.ndarray, dt: float) -> np.ndarray:
        t0 = time.perf_counter()
        fr = f.mean(axis=-1) @ self.propagator(dt).T
        out = np.repeat(fr[..., None], self.grid.ntheta, axis=-1)
        self._tic("collision", t0)
        return out

    def check(self, f: np.ndarray, tol: float = 1e-10) -> None:
        dev = float(np.max(np.abs(f - f.mean(axis=-1, keepdims=True))))
        if dev > tol * max(float(np.max(np.abs(f))), 1e-300):
            raise SolverError(f"first-order model needs gyro-invariant data (deviation {dev:.2e})")


class SecondOrderModel(_Base):
    """Drift-collision model with eps-independent stability."""

    def __init__(self, grid, fields, collision, eps: float):
        super().__init__(grid, fields, collision)
        if not collision.xs.is_constant:
            raise SolverError("second-order model requires a constant cross-section")
        self.eps = float(eps)
        va1, va2 = drift_ExB(fields)
        g1, g2 = drift_gradB(grid, fields)
        self._u = (fields.xb(va1) + g1, fields.xb(va2) + g2)
        self._c = fields.xb(contraction_rate(fields))
        self._r = grid.r[:, None]

    def drift(self, f: np.ndarray) -> np.ndarray:
        """-eps [div_x(u f) + c div_v(v f)], mass-fixed in v."""
        g = self.grid
        dx = g.div_x(self._u[0] * f, self._u[1] * f)
        r = self._r
        dv = self._c * g.d_r(r * r * f) / r
        return -self.eps * (dx + self._mass_fix(dv))

    def rhs(self, f: np.ndarray) -> np.ndarray:
        t0 = time.perf_counter()
        d = self.drift(f)
        self._tic("drift", t0)
        t0 = time.perf_counter()
        q = self.coll.apply_full(f, self.eps)
        self._tic("collision", t0)
        return d + q

    def step(self, f: np.ndarray, dt: float) -> np.ndarray:
        return _rk4(self.rhs, f, dt)

    def drift_rate(self) -> float:
        g = self.grid
        k1, k2 = g._kx
        kx = np.hypot(np.max(np.abs(k1)), np.max(np.abs(k2)))
        u = float(np.max(np.hypot(*np.broadcast_arrays(*self._u))))
        c = float(np.max(np.abs(self._c)))
        return self.eps * (kx * u + c * g.r_max * 2.0 / g.dr)

    def check(self, dt: float) -> None:
        rate = self.drift_rate()
        if dt * rate > RK4_IMAG:
            raise SolverError(f"stage drift: CFL violated, dt={dt:g} > {RK4_IMAG / rate:g}")
        s0 = self.coll.xs.sup
        if s0 > 0 and dt * s0 / self.fields.tau > 2.78:
            raise SolverError(f"stage collision: dt={dt:g} exceeds the RK4 bound {2.78 * self.fields.tau / s0:g}")


def _rk4(op, f, h):
    k1 = op(f)
    k2 = op(f + 0.5 * h * k1)
    k3 = op(f + 0.5 * h * k2)
    k4 = op(f + h * k3)
    return f + h / 6.0 * (k1 + 2.0 * (k2 + k3) + k4)


def make_model(spec: SolverSpec, grid: PhaseGrid, fields: FieldSet, collision: CollisionModel):
    if spec.model == "full":
        return FullModel(grid, fields, collision, spec.eps)
    if spec.model == "first_order":
        return FirstOrderModel(grid, fields, collision, spec.relax)
    return SecondOrderModel(grid, fields, collision, spec.eps)


# ---- driver --------------------------------------------------------------------
@dataclass
class RunReport:
    """Diagnostic time series and per-stage wall-clock."""

    t: list = field(default_factory=list)
    mass: list = field(default_factory=list)
    j1: list = field(default_factory=list)
    j2: list = field(default_factory=list)
    entropy: list = field(default_factory=list)
    norm_F: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    echo: dict = field(default_factory=dict)

    COLUMNS = ("t", "mass", "j1", "j2", "entropy", "norm_F")

    def record(self, t: float, f: np.ndarray, grid: PhaseGrid, F: np.ndarray) -> None:
        ent = grid.inner(f, f, F)
        self.t.append(float(t))
        self.mass.append(grid.integrate(f))
        self.j1.append(grid.integrate(f * grid.v1))
        self.j2.append(grid.integrate(f * grid.v2))
        self.entropy.append(float(ent))
        self.norm_F.append(float(np.sqrt(max(ent, 0.0))))

    def rows(self) -> list[tuple]:
        return list(zip(*(getattr(self, c) for c in self.COLUMNS)))

    def __len__(self) -> int:
        return len(self.t)


def run(model: str | SolverSpec, f0: np.ndarray, spec: SolverSpec | None = None, *,
        grid: PhaseGrid, fields: FieldSet, collision: CollisionModel,
        callback=None) -> tuple[np.ndarray, RunReport]:
    """Fixed-step loop; returns the final state and a RunReport.

    ``model`` may be the model name (overriding ``spec.model``) or a spec.
    With zero steps the input is returned unchanged and the report is empty.
    ``callback(step, t, f)`` is invoked at every diagnostic step."""
    if isinstance(model, SolverSpec):
        spec = model
    elif spec is None:
        raise SolverError("a SolverSpec is required")
    elif model != spec.model:
        spec = SolverSpec(**{**spec.__dict__, "model": model})
    if f0.shape != grid.shape:
        raise SolverError(f"initial data shape {f0.shape} does not match grid {grid.shape}")
    n = spec.nsteps
    report = RunReport(echo={"model": spec.model, "dt": spec.dt, "t_end": spec.t_end, "eps": spec.eps,
                             "scheme": spec.scheme, "shape": grid.shape})
    f = np.array(f0, dtype=float, copy=True)
    if n == 0:
        return f, report
    solver = make_model(spec, grid, fields, collision)
    if spec.model == "first_order":
        solver.check(f)
        stepper = lambda u: solver.step(u, spec.dt)  # noqa: E731
    elif spec.model == "full":
        if spec.check_cfl:
            solver.check(spec.dt, spec.scheme)
        stepper = lambda u: solver.step(u, spec.dt, spec.scheme)  # noqa: E731
    else:
        if spec.check_cfl:
            solver.check(spec.dt)
        stepper = lambda u: solver.step(u, spec.dt)  # noqa: E731
    F = collision.F
    report.record(0.0, f, grid, F)
    t0 = time.perf_counter()
    for k in range(1, n + 1):
        f = stepper(f)
        if not np.isfinite(f).all():
            raise NumericalFailure(f"non-finite values at step {k}", k)
        if k % spec.diag_every == 0 or k == n:
            report.record(k * spec.dt, f, grid, F)
            if callback is not None:
                callback(k, k * spec.dt, f)
    report.timings = dict(solver.timings)
    report.timings["total"] = time.perf_counter() - t0
    return f, report
