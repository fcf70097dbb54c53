"""Convergence sweeps in eps and the drift-balance experiment."""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from ..collision import CollisionModel
from ..fields import FieldSet
from ..phasegrid import PhaseGrid
from ..solvers import prepare_initial, run
from .config import (Config, blob_center, initial_data, make_setup, make_spec, wrapped_offsets)

RESIDUAL_LIMIT = 0.1


def fit_slope(eps, err) -> tuple[float, float]:
    """Least-squares slope of log(err) against log(eps) and the RMS log residual."""
    x, y = np.log(np.asarray(eps, float)), np.log(np.asarray(err, float))
    if len(x) < 3:
        raise ValueError("a slope fit needs at least three points")
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - A @ coef
    return float(coef[0]), float(np.sqrt(np.mean(res**2)))


@dataclass
class ConvergenceTable:
    eps: list = field(default_factory=list)
    error_first: list = field(default_factory=list)
    error_second: list = field(default_factory=list)
    error_ill: list = field(default_factory=list)
    wall: list = field(default_factory=list)

    COLUMNS = ("eps", "error_first", "error_second", "wall")

    def rows(self):
        return list(zip(self.eps, self.error_first, self.error_second, self.wall))

    @property
    def slope_first(self):
        return fit_slope(self.eps, self.error_first)

    @property
    def slope_second(self):
        return fit_slope(self.eps, self.error_second)

    @property
    def slope_ill(self):
        return fit_slope(self.eps, self.error_ill) if self.error_ill else (float("nan"), float("nan"))

    def flags(self) -> list[str]:
        out = []
        for name in ("first", "second"):
            s, r = getattr(self, f"slope_{name}")
            if r > RESIDUAL_LIMIT:
                out.append(f"slope_{name} fit residual {r:.3f} exceeds {RESIDUAL_LIMIT}")
        return out


def cmd_converge(cfg: Config, eps_list=None, ill_prepared: bool = False, log=None,
                 setup: tuple | None = None) -> ConvergenceTable:
    """Full model against first- and second-order models at t = run.t_end.

    The full and second-order runs start from the prepared data
    f_in + eps h1; the first-order run starts from f_in.  With
    ``ill_prepared`` an extra full run from non-gyro-invariant data is
    compared with the first-order model started from its gyroaverage."""
    eps_list = tuple(eps_list or cfg["run.eps_list"])
    if len(eps_list) < 3:
        raise ValueError("eps_list needs at least three values")
    grid, fields, coll = setup or make_setup(cfg)
    T = cfg["run.t_end"]
    om = float(np.max(np.abs(fields.omega)))
    f_in = initial_data(cfg, grid, fields, "perturbed")
    spec1 = make_spec(cfg, "first_order", t_end=T)
    f_first, _ = run(spec1, f_in, grid=grid, fields=fields, collision=coll)
    if ill_prepared:
        f_bad = initial_data(cfg, grid, fields, "ill_prepared")
        f_bad_lim, _ = run(spec1, np.repeat(f_bad.mean(-1, keepdims=True), grid.ntheta, -1),
                           grid=grid, fields=fields, collision=coll)
    table = ConvergenceTable()
    for eps in eps_list:
        t0 = time.perf_counter()
        f0 = prepare_initial(f_in, 1, eps, grid, fields)
        spec_full = make_spec(cfg, "full", eps=eps, t_end=T, omega_max=om)
        f_full, _ = run(spec_full, f0, grid=grid, fields=fields, collision=coll)
        spec2 = make_spec(cfg, "second_order", eps=eps, t_end=T)
        f_second, _ = run(spec2, f0, grid=grid, fields=fields, collision=coll)
        F = coll.F
        table.eps.append(float(eps))
        table.error_first.append(grid.norm(f_full - f_first, F))
        table.error_second.append(grid.norm(f_full - f_second, F))
        if ill_prepared:
            fb, _ = run(spec_full, f_bad, grid=grid, fields=fields, collision=coll)
            table.error_ill.append(grid.norm(fb - f_bad_lim, F))
        table.wall.append(time.perf_counter() - t0)
        if log:
            log(f"eps={eps:g} dt_full={spec_full.dt:.3g} err1={table.error_first[-1]:.4e} "
                f"err2={table.error_second[-1]:.4e} ({table.wall[-1]:.1f}s)")
    return table


# ---- drift balance -----------------------------------------------------------------
@dataclass
class DriftResult:
    t: np.ndarray
    X_solver: np.ndarray
    X_oracle: np.ndarray
    velocity_solver: np.ndarray
    velocity_oracle: np.ndarray
    relative_error: float
    max_displacement_error: float


def com_offset(grid: PhaseGrid, rho: np.ndarray, center) -> np.ndarray:
    """Centre of mass relative to ``center`` using periodic offsets."""
    d1, d2 = wrapped_offsets(grid, center)
    m = rho.sum()
    return np.array([(d1 * rho).sum() / m, (d2 * rho).sum() / m])


class DriftOracle:
    """Moment ODE for the blob centre X, mean squared speed K and P = <perp(v)/omega>.

        dX/dt = eps [ <v_wedge> + K <-perp(grad B)/(2 omega B)> - (s/tau) P ]
        dK/dt = (s/tau)(2T/m - K) + 2 eps K <c>
        dP/dt = -(s/tau) P + eps (s/tau) < (2T/m) grad(omega)/omega^3 - (q/m) E/omega^2 >

    Brackets average analytic field profiles over the initial blob shape
    translated to X, on an independent fine quadrature grid."""

    def __init__(self, cfg: Config, eps: float, nq: int = 128):
        self.cfg = cfg
        self.eps = eps
        f = cfg.section("fields")
        self.q, self.m, self.T, self.tau = f["charge"], f["mass"], f["temperature"], f["tau"]
        self.s = cfg["sigma.s0"]
        self.L = np.array([cfg["grid.L1"], cfg["grid.L2"]])
        self.w = cfg["run.blob_width"]
        self.X0 = np.array([cfg["run.blob_x1"], cfg["run.blob_x2"]]) * self.L
        h = self.L / nq
        # offsets of the quadrature nodes from the blob centre
        o1 = (np.arange(nq) - nq // 2) * h[0]
        o2 = (np.arange(nq) - nq // 2) * h[1]
        self.O1, self.O2 = np.meshgrid(o1, o2, indexing="ij")
        g = np.exp(-(self.O1**2 + self.O2**2) / (2 * self.w**2))
        self.weights = g / g.sum()

    def _profile(self, name, x1, x2):
        s = self.cfg.section("fields")
        kind, mean, amp = s[f"{name}_kind"], s[f"{name}_mean"], s[f"{name}_amp"]
        k1 = 2 * np.pi * s[f"{name}_k1"] / self.L[0]
        k2 = 2 * np.pi * s[f"{name}_k2"] / self.L[1]
        p1, p2 = s[f"{name}_phase"], s[f"{name}_phase2"]
        if kind == "constant" or amp == 0:
            z = np.zeros_like(x1)
            return mean + z, z, z
        if kind == "harmonic":
            a = k1 * x1 + k2 * x2 + p1
            return mean + amp * np.cos(a), -amp * k1 * np.sin(a), -amp * k2 * np.sin(a)
        c1, c2 = np.cos(k1 * x1 + p1), np.cos(k2 * x2 + p2)
        return (mean + amp * c1 * c2, -amp * k1 * np.sin(k1 * x1 + p1) * c2,
                -amp * k2 * c1 * np.sin(k2 * x2 + p2))

    def averages(self, X):
        x1, x2 = X[0] + self.O1, X[1] + self.O2
        _, p1, p2 = self._profile("phi", x1, x2)
        B, B1, B2 = self._profile("B", x1, x2)
        E1, E2 = -p1, -p2
        om = self.q * B / self.m
        w = self.weights
        avg = lambda a: float(np.sum(w * a))  # noqa: E731
        vw = (E2 / B, -E1 / B)
        gd = (-B2 / (2 * om * B), B1 / (2 * om * B))
        c = (vw[0] * B1 + vw[1] * B2) / (2 * B)
        qm = self.q / self.m
        src = ((2 * self.T / self.m) * qm * B1 / om**3 - qm * E1 / om**2,
               (2 * self.T / self.m) * qm * B2 / om**3 - qm * E2 / om**2)
        return ((avg(vw[0]), avg(vw[1])), (avg(gd[0]), avg(gd[1])), avg(c), (avg(src[0]), avg(src[1])),
                (avg(-E1 / (B * om)), avg(-E2 / (B * om))), (avg(qm * B1 / om**3), avg(qm * B2 / om**3)))

    def initial_state(self):
        K0 = 2.0 * self.cfg["run.blob_temperature"] / self.m
        vw, gd, c, src, eb, gw = self.averages(self.X0)
        # P of f_in + eps h1 for f_in = rho(x) g(|v|)
        P0 = self.eps * (np.array(eb) + K0 * np.array(gw))
        return np.array([self.X0[0], self.X0[1], K0, P0[0], P0[1]])

    def rhs(self, t, y):
        X, K, P = y[:2], y[2], y[3:]
        vw, gd, c, src, _, _ = self.averages(X)
        nu = self.s / self.tau
        e = self.eps
        dX = e * (np.array(vw) + K * np.array(gd) - nu * P)
        dK = nu * (2 * self.T / self.m - K) + 2 * e * K * c
        dP = -nu * P + e * nu * np.array(src)
        return np.concatenate([dX, [dK], dP])

    def solve(self, t_eval):
        sol = solve_ivp(self.rhs, (0.0, float(t_eval[-1])), self.initial_state(), t_eval=t_eval,
                        rtol=1e-10, atol=1e-13, method="DOP853")
        return sol.y[:2].T


def drift_balance(cfg: Config, eps: float | None = None, t_end: float | None = None,
                  setup: tuple | None = None) -> DriftResult:
    """Second-order blob run against the moment-ODE oracle."""
    eps = cfg["run.drift_eps"] if eps is None else eps
    T = cfg["run.drift_t_end"] if t_end is None else t_end
    grid, fields, coll = setup or make_setup(cfg)
    f_in = initial_data(cfg, grid, fields, "blob")
    f0 = prepare_initial(f_in, 1, eps, grid, fields)
    spec = dataclasses.replace(make_spec(cfg, "second_order", eps=eps, t_end=T), diag_every=1)
    center = blob_center(cfg, grid)
    ts, Xs = [0.0], [center + com_offset(grid, grid.integrate_v(f0), center)]

    def cb(k, t, f):
        ts.append(t)
        Xs.append(center + com_offset(grid, grid.integrate_v(f), center))

    run(spec, f0, grid=grid, fields=fields, collision=coll, callback=cb)
    t = np.array(ts)
    X = np.array(Xs)
    Xo = DriftOracle(cfg, eps).solve(t)
    vs = (X[-1] - X[0]) / T
    vo = (Xo[-1] - Xo[0]) / T
    rel = float(np.linalg.norm(vs - vo) / np.linalg.norm(vo))
    disp = np.linalg.norm((X - X[0]) - (Xo - Xo[0]), axis=1).max() / np.linalg.norm(Xo[-1] - Xo[0])
    return DriftResult(t, X, Xo, vs, vo, rel, float(disp))
