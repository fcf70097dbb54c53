"""Command-line entry point: ``gyrocoll {simulate,converge,verify,bench}``.

Exit codes: 0 ok, 1 invalid configuration or parameters, 2 numerical
failure, 3 failed property or acceptance check.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from ..phasegrid import set_workers
from ..solvers import NumericalFailure, RunReport, SolverError, prepare_initial, run
from .config import Config, ConfigError, initial_data, load_config, make_setup, make_spec
from .io import write_checkpoint, write_csv, write_trace

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL, EXIT_PROPERTY = 0, 1, 2, 3


def cmd_simulate(cfg: Config, out: str | Path | None = None, log=None) -> tuple[np.ndarray, RunReport]:
    """Run the configured model; write trace.csv and a checkpoint into ``out``."""
    grid, fields, coll = make_setup(cfg)
    model = cfg["solver.model"]
    om = float(np.max(np.abs(fields.omega)))
    spec = make_spec(cfg, omega_max=om)
    f0 = initial_data(cfg, grid, fields)
    if model != "first_order" and cfg["run.init_order"] == 1 and cfg["run.init"] != "ill_prepared":
        f0 = prepare_initial(f0, 1, spec.eps, grid, fields)
    elif model == "first_order":
        f0 = np.repeat(f0.mean(-1, keepdims=True), grid.ntheta, -1)
    f, rep = run(spec, f0, grid=grid, fields=fields, collision=coll)
    rep.echo.update(cfg.values)
    if out is not None:
        out = Path(out)
        write_trace(out / "trace.csv", rep)
        if cfg["run.checkpoint"]:
            meta = {"nx1": grid.nx1, "nx2": grid.nx2, "nr": grid.nr, "ntheta": grid.ntheta,
                    "L1": grid.L1, "L2": grid.L2, "r_max": grid.r_max, "charge": fields.q, "mass": fields.m,
                    "temperature": fields.theta_T, "tau": fields.tau, "eps": spec.eps,
                    "time": spec.t_end, "model": model}
            write_checkpoint(out / "state.bin", f, meta)
    if log:
        log(f"{model}: {spec.nsteps} steps of dt={spec.dt:.4g}, mass drift "
            f"{abs(rep.mass[-1] - rep.mass[0]) / abs(rep.mass[0]) if len(rep) else 0.0:.2e}, "
            f"wall {rep.timings.get('total', 0.0):.1f}s")
    return f, rep


def _simulate(cfg, args, log):
    cmd_simulate(cfg, args.out, log)
    return EXIT_OK


def _converge(cfg, args, log):
    from .converge import cmd_converge
    tab = cmd_converge(cfg, ill_prepared=args.ill_prepared, log=log)
    rows = tab.rows()
    write_csv(Path(args.out) / "converge.csv", list(tab.COLUMNS), rows)
    s1, r1 = tab.slope_first
    s2, r2 = tab.slope_second
    log(f"slope_first = {s1:.3f} (residual {r1:.3f}); slope_second = {s2:.3f} (residual {r2:.3f})")
    if args.ill_prepared:
        log(f"slope_first, ill-prepared data = {tab.slope_ill[0]:.3f}")
    for flag in tab.flags():
        log(f"warning: {flag}")
    return EXIT_OK


def _verify(cfg, args, log):
    from .verify import run_checks, write_manifest
    checks = run_checks(cfg, seed=args.seed, inject=args.inject, log=log)
    write_manifest(Path(args.out) / "verify.csv", checks)
    failed = [c.id for c in checks if not c.passed]
    log(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
    return EXIT_PROPERTY if failed else EXIT_OK


def _bench(cfg, args, log):
    from .bench import cmd_bench
    tab = cmd_bench(cfg, log=log, seed=args.seed)
    write_csv(Path(args.out) / "bench.csv", list(tab.COLUMNS), tab.rows())
    log(f"dt_explicit exponent = {tab.exponent:.3f} (residual {tab.exponent_residual:.3f}); "
        f"speedup at eps={cfg['run.bench_eps_speedup']:g}: {tab.speedup(cfg['run.bench_eps_speedup']):.1f}")
    return EXIT_OK


COMMANDS = {"simulate": _simulate, "converge": _converge, "verify": _verify, "bench": _bench}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gyrocoll", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", default=None, help="key = value configuration file")
        s.add_argument("--out", default=".", help="output directory")
        s.add_argument("--threads", type=int, default=None, help="FFT worker threads")
        s.add_argument("--seed", type=int, default=0, help="seed for randomized test functions")
        if name == "verify":
            s.add_argument("--inject", default=None, choices=["s2_asym"], help=argparse.SUPPRESS)
        if name == "converge":
            s.add_argument("--ill-prepared", action="store_true", help="also run non-gyro-invariant data")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    def log(msg):
        print(msg, flush=True)

    try:
        cfg = load_config(args.config)
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError(f"--threads: must be >= 1, got {args.threads}")
            set_workers(args.threads)
        return COMMANDS[args.command](cfg, args, log)
    except (ConfigError, SolverError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (NumericalFailure, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
