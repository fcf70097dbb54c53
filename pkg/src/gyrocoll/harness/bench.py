"""Cost comparison of the stiff full model against the asymptotic models.

Stable explicit steps are located by bisection: a step is declared stable if
``bench_steps`` steps from seeded random data do not grow the L2_F norm by
more than ``GROWTH``.  The bisection runs on the default velocity grid with
``run.bench_nx`` spatial nodes per axis; the spatial spectrum of the coarse
grid is contained in that of the default grid, so the resulting explicit step
is an upper bound and the reported speedups are lower bounds.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..solvers import FullModel, SecondOrderModel, RK4_IMAG
from .config import Config, make_setup, make_spec
from .converge import fit_slope

GROWTH = 2.0


def _is_stable(step, f0, norm, nsteps: int) -> bool:
    n0 = norm(f0)
    f = f0
    for _ in range(nsteps):
        f = step(f)
        if not np.isfinite(f).all():
            return False
    return bool(norm(f) <= GROWTH * n0)


def bisect_stable_dt(step_factory, f0, norm, hi: float, nsteps: int, rtol: float = 0.01,
                     max_expand: int = 20) -> float:
    """Largest stable step: expand ``hi`` until unstable, then bisect."""
    lo = 0.0
    for _ in range(max_expand):
        if not _is_stable(step_factory(hi), f0, norm, nsteps):
            break
        lo, hi = hi, 2.0 * hi
    else:
        return hi
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if _is_stable(step_factory(mid), f0, norm, nsteps):
            lo = mid
        else:
            hi = mid
    return lo


def random_state(grid, F, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return F * (1.0 + 0.5 * rng.standard_normal(grid.shape))


@dataclass
class BenchTable:
    eps: list = field(default_factory=list)
    dt_explicit: list = field(default_factory=list)
    dt_split: list = field(default_factory=list)
    dt_second_stable: list = field(default_factory=list)
    dt_second: float = 0.0
    second_admitted: list = field(default_factory=list)
    wall_explicit: list = field(default_factory=list)
    wall_split: list = field(default_factory=list)
    wall_second: list = field(default_factory=list)
    time_per_step: dict = field(default_factory=dict)
    exponent: float = float("nan")
    exponent_residual: float = float("nan")

    COLUMNS = ("eps", "dt_explicit", "dt_split", "dt_second_stable", "dt_second", "second_admitted",
               "wall_explicit", "wall_split", "wall_second", "speedup_second", "speedup_split")

    def rows(self):
        out = []
        for i, e in enumerate(self.eps):
            out.append((e, self.dt_explicit[i], self.dt_split[i], self.dt_second_stable[i], self.dt_second,
                        self.second_admitted[i], self.wall_explicit[i], self.wall_split[i],
                        self.wall_second[i], self.wall_explicit[i] / self.wall_second[i],
                        self.wall_explicit[i] / self.wall_split[i]))
        return out

    def speedup(self, eps: float) -> float:
        i = int(np.argmin(np.abs(np.asarray(self.eps) - eps)))
        return self.wall_explicit[i] / self.wall_second[i]


def _time_steps(step, f, n: int = 3) -> float:
    f = step(f)
    t0 = time.perf_counter()
    for _ in range(n):
        f = step(f)
    return (time.perf_counter() - t0) / n


def cmd_bench(cfg: Config, eps_list=None, log=None, seed: int = 0, admit_steps: int | None = None) -> BenchTable:
    eps_list = tuple(eps_list or cfg["run.bench_eps"])
    T = cfg["run.t_end"]
    nsteps = cfg["run.bench_steps"]
    nb = cfg["run.bench_nx"]
    small = make_setup(cfg, nx1=nb, nx2=nb)
    big = make_setup(cfg)
    tab = BenchTable()
    tab.dt_second = make_spec(cfg, "second_order", t_end=T).dt

    gs, fs, cs = small
    f_small = random_state(gs, cs.F, seed)
    norm_s = lambda u: gs.norm(u, cs.F)  # noqa: E731
    gb, fb, cb = big
    f_big = random_state(gb, cb.F, seed)
    norm_b = lambda u: gb.norm(u, cb.F)  # noqa: E731
    om = float(np.max(np.abs(fb.omega)))

    # per-step cost on the default grid (eps only enters as a scalar factor)
    fm = FullModel(gb, fb, cb, eps_list[0])
    sm = SecondOrderModel(gb, fb, cb, eps_list[0])
    tab.time_per_step = {
        "explicit": _time_steps(lambda u: fm.step(u, 1e-4, "rk4"), f_big),
        "split": _time_steps(lambda u: fm.step(u, 1e-4, "lawson"), f_big),
        "second": _time_steps(lambda u: sm.step(u, tab.dt_second), f_big),
    }
    for eps in eps_list:
        m_full = FullModel(gs, fs, cs, eps)
        guess = RK4_IMAG / (m_full.fast_rate() + m_full.transport_rate())
        dt_e = bisect_stable_dt(lambda h: (lambda u: m_full.step(u, h, "rk4")), f_small, norm_s, guess, nsteps)
        m2 = SecondOrderModel(gs, fs, cs, eps)
        dt_2 = bisect_stable_dt(lambda h: (lambda u: m2.step(u, h)), f_small, norm_s,
                                max(tab.dt_second, 1e-3), nsteps)
        m2b = SecondOrderModel(gb, fb, cb, eps)
        admitted = _is_stable(lambda u: m2b.step(u, tab.dt_second), f_big, norm_b, admit_steps or nsteps)
        dt_split = make_spec(cfg, "full", eps=eps, t_end=T, omega_max=om).dt
        tab.eps.append(float(eps))
        tab.dt_explicit.append(dt_e)
        tab.dt_second_stable.append(dt_2)
        tab.second_admitted.append(bool(admitted))
        tab.dt_split.append(dt_split)
        tab.wall_explicit.append(T / dt_e * tab.time_per_step["explicit"])
        tab.wall_split.append(T / dt_split * tab.time_per_step["split"])
        tab.wall_second.append(T / tab.dt_second * tab.time_per_step["second"])
        if log:
            log(f"eps={eps:g} dt_explicit={dt_e:.4g} dt_second_stable={dt_2:.4g} admitted={admitted} "
                f"speedup={tab.wall_explicit[-1] / tab.wall_second[-1]:.1f}")
    tab.exponent, tab.exponent_residual = fit_slope(tab.eps, tab.dt_explicit)
    return tab
