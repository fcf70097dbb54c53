"""Acceptance criteria at their stated tolerances (about 30 minutes in total).

Each test appends a ``PASS``/``FAIL`` line to ``RESULTS``; the lines are
printed in the terminal summary.
"""

import time

import numpy as np
import pytest

from gyrocoll.collision import assemble, null_space_dimension
from gyrocoll.harness.bench import cmd_bench
from gyrocoll.harness.config import default_config, initial_data, make_setup
from gyrocoll.harness.converge import cmd_converge, drift_balance
from gyrocoll.harness.verify import run_checks
from gyrocoll.solvers import SolverSpec, prepare_initial, run

RESULTS: list[str] = []


def record(name: str, ok: bool, detail: str) -> bool:
    line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
    RESULTS.append(line)
    print(line)
    return ok


@pytest.fixture(scope="module")
def sweep():
    t0 = time.perf_counter()
    tab = cmd_converge(default_config())
    return tab, time.perf_counter() - t0


def test_first_order_rate(sweep):
    tab, wall = sweep
    s, r = tab.slope_first
    assert record("1 first-order rate", 0.8 <= s <= 1.2 and r < 0.1,
                  f"slope {s:.3f} in [0.8, 1.2], residual {r:.3f} < 0.1, errors "
                  + ", ".join(f"{e:.3e}" for e in tab.error_first) + f" ({wall:.0f}s)")


def test_second_order_rate(sweep):
    tab, _ = sweep
    s, r = tab.slope_second
    assert record("2 second-order rate", 1.7 <= s <= 2.3,
                  f"slope {s:.3f} in [1.7, 2.3], residual {r:.3f}, errors "
                  + ", ".join(f"{e:.3e}" for e in tab.error_second))


def test_operator_identities():
    t0 = time.perf_counter()
    checks = run_checks(default_config())
    failed = [c.id for c in checks if not c.passed]
    wall = time.perf_counter() - t0
    assert record("3 operator identities", not failed and wall < 300,
                  f"{len(checks) - len(failed)}/{len(checks)} checks green ({wall:.0f}s)"
                  + (f"; failed {failed}" if failed else ""))


def test_conservation_and_dissipation():
    cfg = default_config().replace(grid__nx1=16, grid__nx2=16, grid__nr=16, grid__ntheta=16,
                                   grid__tol_mass=1e-6)
    grid, fields, coll = make_setup(cfg)
    f_in = initial_data(cfg, grid, fields, "perturbed")
    eps = 0.05
    ok, parts = True, []
    for model, dt in (("full", 0.0025), ("first_order", 0.05), ("second_order", 0.05)):
        f0 = f_in if model == "first_order" else prepare_initial(f_in, 1, eps, grid, fields)
        spec = SolverSpec(model, dt=dt, t_end=1000 * dt, eps=eps, diag_every=1)
        _, rep = run(spec, f0, grid=grid, fields=fields, collision=coll)
        m, e = np.asarray(rep.mass), np.asarray(rep.entropy)
        drift = float(np.max(np.abs(m - m[0])) / abs(m[0]))
        rise = float(np.max(np.diff(e)) / e[0])
        ok &= len(m) == 1001 and drift <= 1e-10
        if model != "second_order":
            ok &= rise <= 1e-14
            parts.append(f"{model} mass drift {drift:.1e}, max entropy rise {rise:.1e}")
        else:
            parts.append(f"{model} mass drift {drift:.1e}")
    assert record("4 conservation/dissipation", ok, "; ".join(parts))


def test_drift_balance():
    r = drift_balance(default_config())
    assert record("5 drift balance", r.relative_error < 0.05,
                  f"relative velocity error {r.relative_error:.2e} < 0.05 "
                  f"(solver {r.velocity_solver}, oracle {r.velocity_oracle})")


def test_performance():
    cfg = default_config()
    tab = cmd_bench(cfg)
    sp = tab.speedup(0.01)
    ok = 0.8 <= tab.exponent <= 1.2 and all(tab.second_admitted) and sp >= 10
    assert record("6 performance", ok,
                  f"dt exponent {tab.exponent:.3f} in [0.8, 1.2], fixed dt {tab.dt_second:g} admitted "
                  f"{all(tab.second_admitted)}, speedup at eps=0.01 {sp:.1f} >= 10")


def test_kernel():
    cfg = default_config()
    grid, fields, coll = make_setup(cfg)
    F = coll.F
    res = {e: grid.norm(coll.apply_full(F, e), F) for e in (0.0, 0.05, 0.1)}
    cgrid, _, ccoll = make_setup(cfg, nx1=5, nx2=5, nr=8, ntheta=8, tol_mass=1e-4)
    dim, _ = null_space_dimension(assemble(lambda f: ccoll.apply_full(f, 0.05), cgrid.shape))
    ok = all(v < 1e-10 for v in res.values()) and dim == 1
    assert record("7 kernel", ok, ", ".join(f"residual(eps={e:g}) {v:.1e}" for e, v in res.items())
                  + f"; coarse null-space dimension {dim}")
