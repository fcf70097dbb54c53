"""Flat ``key = value`` configuration with section prefixes.

Recognised sections are ``grid.``, ``fields.``, ``sigma.``, ``solver.`` and
``run.``.  Blank lines and ``#`` comments are ignored.  Every key has a typed
default (see ``DEFAULTS``); unknown keys and malformed values raise
``ConfigError`` naming the offending key path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..collision import CollisionError, CollisionModel, CrossSection
from ..fields import FieldConfig, FieldError, FieldSet, Profile, build_fields, equilibrium
from ..phasegrid import GridError, PhaseGrid, build_grid
from ..solvers import SolverError, SolverSpec

TWO_PI = 2.0 * math.pi


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the key path."""


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.replace(";", ",").split(",") if t.strip())


# key -> (parser, default)
DEFAULTS: dict[str, tuple] = {
    "grid.nx1": (int, 32),
    "grid.nx2": (int, 32),
    "grid.L1": (float, TWO_PI),
    "grid.L2": (float, TWO_PI),
    "grid.nr": (int, 32),
    "grid.ntheta": (int, 32),
    "grid.r_max": (float, 6.5),
    "grid.fd_order": (int, 8),
    "grid.tol_mass": (float, 1e-8),
    "fields.charge": (float, 1.0),
    "fields.mass": (float, 1.0),
    "fields.temperature": (float, 1.0),
    "fields.tau": (float, 1.0),
    "fields.eps": (float, 0.1),
    "fields.phi_kind": (str, "product"),
    "fields.phi_mean": (float, 0.0),
    "fields.phi_amp": (float, 0.05),
    "fields.phi_k1": (int, 1),
    "fields.phi_k2": (int, 1),
    "fields.phi_phase": (float, 0.0),
    "fields.phi_phase2": (float, 0.0),
    "fields.B_kind": (str, "harmonic"),
    "fields.B_mean": (float, 1.0),
    "fields.B_amp": (float, 0.2),
    "fields.B_k1": (int, 1),
    "fields.B_k2": (int, 0),
    "fields.B_phase": (float, 0.0),
    "fields.B_phase2": (float, 0.0),
    "sigma.kind": (str, "constant"),
    "sigma.s0": (float, 1.0),
    "sigma.a": (float, 0.0),
    "sigma.b": (float, 0.0),
    "sigma.n_alpha": (int, 0),
    "solver.model": (str, "full"),
    "solver.scheme": (str, "lawson"),
    "solver.relax": (str, "expm"),
    "solver.dt": (float, 0.0),
    "solver.dt_second": (float, 0.05),
    "solver.dt_first": (float, 0.05),
    "solver.phase_step": (float, 0.25),
    "solver.dt_max": (float, 0.005),
    "run.t_end": (float, 0.5),
    "run.diag_every": (int, 10),
    "run.init": (str, "perturbed"),
    "run.init_order": (int, 1),
    "run.init_density": (float, 0.2),
    "run.init_energy": (float, 0.2),
    "run.init_gyro": (float, 0.2),
    "run.blob_width": (float, 0.35),
    "run.blob_x1": (float, 0.25),
    "run.blob_x2": (float, 0.5),
    "run.blob_temperature": (float, 1.2),
    "run.eps_list": (_floats, (0.1, 0.05, 0.025, 0.0125)),
    "run.bench_eps": (_floats, (0.02, 0.01, 0.005, 0.0025)),
    "run.bench_nx": (int, 8),
    "run.bench_steps": (int, 60),
    "run.bench_eps_speedup": (float, 0.01),
    "run.drift_eps": (float, 0.05),
    "run.drift_t_end": (float, 1.0),
    "run.checkpoint": (int, 1),
}

INIT_KINDS = ("perturbed", "equilibrium", "blob", "ill_prepared")


@dataclass
class Config:
    """Parsed configuration: a mapping from key path to typed value."""

    values: dict

    def __getitem__(self, key: str):
        return self.values[key]

    def section(self, prefix: str) -> dict:
        p = prefix.rstrip(".") + "."
        return {k[len(p):]: v for k, v in self.values.items() if k.startswith(p)}

    def replace(self, **updates) -> "Config":
        """Copy with overrides; keyword names use '__' for '.'."""
        vals = dict(self.values)
        for k, v in updates.items():
            key = k.replace("__", ".")
            if key not in DEFAULTS:
                raise ConfigError(f"{key}: unknown key")
            vals[key] = v
        out = Config(vals)
        out.validate()
        return out

    def to_text(self) -> str:
        lines = []
        for k in DEFAULTS:
            v = self.values[k]
            if isinstance(v, tuple):
                v = ", ".join(repr(float(x)) for x in v)
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"

    # ---- validation ----------------------------------------------------------
    def validate(self) -> None:
        v = self.values
        for kind_key, allowed in (("fields.phi_kind", ("constant", "harmonic", "product")),
                                  ("fields.B_kind", ("constant", "harmonic", "product")),
                                  ("sigma.kind", ("constant", "rational")),
                                  ("run.init", INIT_KINDS)):
            if v[kind_key] not in allowed:
                raise ConfigError(f"{kind_key}: must be one of {allowed}, got {v[kind_key]!r}")
        for key in ("fields.eps", "solver.dt_second", "solver.dt_first", "solver.phase_step",
                    "solver.dt_max", "run.blob_width", "run.blob_temperature", "run.drift_eps",
                    "run.drift_t_end"):
            if not (np.isfinite(v[key]) and v[key] > 0):
                raise ConfigError(f"{key}: must be positive, got {v[key]!r}")
        if v["solver.dt"] < 0:
            raise ConfigError(f"solver.dt: must be nonnegative (0 selects automatic), got {v['solver.dt']!r}")
        if v["run.init_order"] not in (0, 1):
            raise ConfigError(f"run.init_order: must be 0 or 1, got {v['run.init_order']!r}")
        if v["run.diag_every"] < 1:
            raise ConfigError(f"run.diag_every: must be >= 1, got {v['run.diag_every']!r}")
        if v["sigma.n_alpha"] < 0:
            raise ConfigError(f"sigma.n_alpha: must be >= 0, got {v['sigma.n_alpha']!r}")
        for key in ("run.eps_list", "run.bench_eps"):
            lst = v[key]
            if len(lst) < 3:
                raise ConfigError(f"{key}: needs at least three values, got {len(lst)}")
            if any(not (e > 0) for e in lst) or any(b >= a for a, b in zip(lst, lst[1:])):
                raise ConfigError(f"{key}: values must be positive and strictly decreasing")
        if v["run.bench_nx"] < 2 or v["run.bench_steps"] < 1:
            raise ConfigError("run.bench_nx: must be >= 2 and run.bench_steps >= 1")


def parse_config(text: str, source: str = "<string>") -> Config:
    vals = {k: d for k, (_, d) in DEFAULTS.items()}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in DEFAULTS:
            section = key.split(".", 1)[0]
            if section not in ("grid", "fields", "sigma", "solver", "run"):
                raise ConfigError(f"{key}: unknown section {section!r}")
            raise ConfigError(f"{key}: unknown key")
        parser = DEFAULTS[key][0]
        try:
            if parser is int:
                fv = float(val)
                if fv != int(fv):
                    raise ValueError
                vals[key] = int(fv)
            else:
                vals[key] = parser(val)
        except ValueError:
            raise ConfigError(f"{key}: cannot parse {val!r} as {getattr(parser, '__name__', 'list')}") from None
    cfg = Config(vals)
    cfg.validate()
    return cfg


def load_config(path: str | Path | None) -> Config:
    if path is None:
        return parse_config("")
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config: file not found: {p}")
    return parse_config(p.read_text(), str(p))


def default_config() -> Config:
    return parse_config("")


# ---- builders ------------------------------------------------------------
def _profile(cfg: Config, name: str) -> Profile:
    s = cfg.section("fields")
    return Profile(s[f"{name}_kind"], s[f"{name}_mean"], s[f"{name}_amp"], s[f"{name}_k1"],
                   s[f"{name}_k2"], s[f"{name}_phase"], s[f"{name}_phase2"])


def make_grid(cfg: Config, **over) -> PhaseGrid:
    g = cfg.section("grid")
    g.update(over)
    try:
        return build_grid(g["nx1"], g["nx2"], g["L1"], g["L2"], g["nr"], g["ntheta"], g["r_max"],
                          mass=cfg["fields.mass"], temperature=cfg["fields.temperature"],
                          fd_order=min(g["fd_order"], 2 * ((g["nr"] - 1) // 2)), tol_mass=g["tol_mass"])
    except GridError as exc:
        raise ConfigError(str(exc)) from None


def make_fields(cfg: Config, grid: PhaseGrid) -> FieldSet:
    fc = FieldConfig(_profile(cfg, "phi"), _profile(cfg, "B"), cfg["fields.charge"], cfg["fields.mass"],
                     cfg["fields.temperature"], cfg["fields.tau"])
    try:
        return build_fields(fc, grid)
    except FieldError as exc:
        raise ConfigError(str(exc)) from None


def make_cross_section(cfg: Config) -> CrossSection:
    s = cfg.section("sigma")
    try:
        return CrossSection(s["kind"], s["s0"], s["a"], s["b"])
    except CollisionError as exc:
        raise ConfigError(f"sigma: {exc}") from None


def make_setup(cfg: Config, **grid_over) -> tuple[PhaseGrid, FieldSet, CollisionModel]:
    grid = make_grid(cfg, **grid_over)
    fields = make_fields(cfg, grid)
    xs = make_cross_section(cfg)
    n_alpha = cfg["sigma.n_alpha"] or None
    return grid, fields, CollisionModel(grid, fields, xs, n_alpha)


def auto_dt(cfg: Config, model: str, eps: float, t_end: float, omega_max: float) -> float:
    """Time step dividing t_end: explicit value, or the accuracy-limited default."""
    if cfg["solver.dt"] > 0:
        dt = cfg["solver.dt"]
    elif model == "full":
        dt = min(cfg["solver.dt_max"], cfg["solver.phase_step"] * eps / omega_max)
    elif model == "second_order":
        dt = cfg["solver.dt_second"]
    else:
        dt = cfg["solver.dt_first"]
    if t_end == 0:
        return dt
    return t_end / math.ceil(t_end / dt - 1e-9)


def make_spec(cfg: Config, model: str | None = None, eps: float | None = None,
              t_end: float | None = None, omega_max: float = 1.0) -> SolverSpec:
    model = model or cfg["solver.model"]
    eps = cfg["fields.eps"] if eps is None else eps
    t_end = cfg["run.t_end"] if t_end is None else t_end
    dt = auto_dt(cfg, model, eps, t_end, omega_max)
    try:
        return SolverSpec(model=model, dt=dt, t_end=t_end, eps=eps, scheme=cfg["solver.scheme"],
                          relax=cfg["solver.relax"], diag_every=cfg["run.diag_every"])
    except SolverError as exc:
        raise ConfigError(str(exc)) from None


# ---- initial data --------------------------------------------------------
def initial_data(cfg: Config, grid: PhaseGrid, fields: FieldSet, kind: str | None = None) -> np.ndarray:
    """Catalogued gyro-invariant data f_in (or a non-invariant one for 'ill_prepared').

    perturbed:   F (1 + a cos(x1') sin(x2') + b cos(x2') (m r^2 / 2T - 1))
    equilibrium: F
    blob:        Gaussian density times a Maxwellian at the blob temperature
    ill_prepared: perturbed + c F cos(theta) sin(x1')
    where x' = 2 pi x / L."""
    kind = kind or cfg["run.init"]
    F = equilibrium(grid, fields)
    X1, X2 = np.meshgrid(grid.x1, grid.x2, indexing="ij")
    a1, a2 = TWO_PI * X1 / grid.L1, TWO_PI * X2 / grid.L2
    xb = fields.xb
    if kind == "equilibrium":
        return F.copy()
    if kind == "blob":
        return blob_density(cfg, grid)[:, :, None, None] * blob_velocity(cfg, grid)[None, None]
    er = (0.5 * fields.m / fields.theta_T) * grid.r[:, None] ** 2 - 1.0
    f = F * (1.0 + cfg["run.init_density"] * xb(np.cos(a1) * np.sin(a2))
             + cfg["run.init_energy"] * xb(np.cos(a2)) * er)
    if kind == "ill_prepared":
        f = f + cfg["run.init_gyro"] * F * xb(np.sin(a1)) * grid.cos
    return np.ascontiguousarray(f)


def blob_center(cfg: Config, grid: PhaseGrid) -> np.ndarray:
    return np.array([cfg["run.blob_x1"] * grid.L1, cfg["run.blob_x2"] * grid.L2])


def wrapped_offsets(grid: PhaseGrid, center) -> tuple[np.ndarray, np.ndarray]:
    """Periodic offsets x - center mapped into [-L/2, L/2)."""
    X1, X2 = np.meshgrid(grid.x1, grid.x2, indexing="ij")
    d1 = (X1 - center[0] + 0.5 * grid.L1) % grid.L1 - 0.5 * grid.L1
    d2 = (X2 - center[1] + 0.5 * grid.L2) % grid.L2 - 0.5 * grid.L2
    return d1, d2


def blob_density(cfg: Config, grid: PhaseGrid) -> np.ndarray:
    d1, d2 = wrapped_offsets(grid, blob_center(cfg, grid))
    w = cfg["run.blob_width"]
    return np.exp(-(d1**2 + d2**2) / (2.0 * w * w)) / (TWO_PI * w * w)


def blob_velocity(cfg: Config, grid: PhaseGrid) -> np.ndarray:
    a = grid.mass / cfg["run.blob_temperature"]
    prof = a / TWO_PI * np.exp(-0.5 * a * grid.r**2)
    return np.broadcast_to(prof[:, None], (grid.nr, grid.ntheta))
