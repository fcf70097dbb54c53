import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gyrocoll.harness import cli
from gyrocoll.harness.bench import bisect_stable_dt
from gyrocoll.harness.config import (ConfigError, auto_dt, default_config, initial_data, load_config,
                                     make_setup, make_spec, parse_config)
from gyrocoll.harness.converge import ConvergenceTable, DriftOracle, cmd_converge, fit_slope
from gyrocoll.harness.io import read_checkpoint, read_csv, write_checkpoint, write_csv
from gyrocoll.harness.verify import run_checks
from gyrocoll.solvers import NumericalFailure, RK4_IMAG

SMALL = """
grid.nx1 = 8
grid.nx2 = 8
grid.nr = 16
grid.ntheta = 16
grid.tol_mass = 1e-6
run.t_end = 0.1
"""


def test_defaults_and_overrides():
    cfg = default_config()
    assert cfg["grid.nx1"] == 32 and cfg["run.t_end"] == 0.5 and cfg["fields.tau"] == 1.0
    cfg2 = parse_config("grid.nx1 = 16  # comment\n\nsigma.kind = rational\nsigma.a = 0.5\n")
    assert cfg2["grid.nx1"] == 16 and cfg2["sigma.kind"] == "rational"
    assert parse_config(cfg2.to_text()).values == cfg2.values


@pytest.mark.parametrize("text,key", [
    ("grid.nx1 = abc", "grid.nx1"),
    ("grid.nx1 = 2.5", "grid.nx1"),
    ("grid.bogus = 1", "grid.bogus"),
    ("mesh.nx = 1", "mesh.nx"),
    ("fields.eps = -1", "fields.eps"),
    ("sigma.kind = cubic", "sigma.kind"),
    ("run.eps_list = 0.1, 0.2, 0.05", "run.eps_list"),
    ("run.eps_list = 0.1, 0.05", "run.eps_list"),
    ("just text", "<string>:1"),
])
def test_config_errors_name_key(text, key):
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert str(exc.value).startswith(key)


def test_setup_errors_are_config_errors():
    with pytest.raises(ConfigError, match="r_max"):
        make_setup(parse_config("grid.r_max = 3.0"))
    with pytest.raises(ConfigError, match="fields"):
        make_setup(parse_config(SMALL + "fields.B_mean = 0.1\nfields.B_amp = 0.5"))
    with pytest.raises(ConfigError, match="config"):
        load_config("/nonexistent/file.cfg")


def test_auto_dt_divides_t_end():
    cfg = default_config()
    for eps in (0.1, 0.05, 0.0125, 0.003):
        dt = auto_dt(cfg, "full", eps, 0.5, 1.2)
        assert dt <= 0.25 * eps / 1.2 + 1e-15 and dt <= cfg["solver.dt_max"]
        assert abs(0.5 / dt - round(0.5 / dt)) < 1e-9
    assert make_spec(cfg, "second_order").dt == pytest.approx(0.05)


def test_initial_data_kinds():
    cfg = parse_config(SMALL)
    grid, fields, cm = make_setup(cfg)
    for kind in ("perturbed", "equilibrium", "blob"):
        f = initial_data(cfg, grid, fields, kind)
        assert np.max(np.abs(f - f.mean(-1, keepdims=True))) == 0
        if kind != "perturbed":
            assert np.all(f > 0)
    bad = initial_data(cfg, grid, fields, "ill_prepared")
    assert np.max(np.abs(bad - bad.mean(-1, keepdims=True))) > 1e-3
    from gyrocoll.harness.config import blob_velocity
    g = np.broadcast_to(blob_velocity(cfg, grid), grid.shape)
    assert grid.integrate(g) == pytest.approx(grid.L1 * grid.L2, rel=1e-6)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=1, max_size=20))
def test_csv_roundtrip_exact(tmp_path_factory, vals):
    p = tmp_path_factory.mktemp("csv") / "t.csv"
    write_csv(p, ["t", "mass"], [(v, -v) for v in vals])
    back = read_csv(p)
    assert [float(x) for x in back["t"]] == vals and [float(x) for x in back["mass"]] == [-v for v in vals]
    assert open(p).readline().startswith("t (time),mass (")


def test_checkpoint_roundtrip_and_validation(tmp_path):
    f = np.random.default_rng(0).standard_normal((2, 3, 4, 8))
    path, side = write_checkpoint(tmp_path / "s.bin", f, {"time": 0.5, "model": "full"})
    g, meta = read_checkpoint(path)
    assert np.array_equal(f, g) and meta["model"] == "full" and meta["endianness"] == "little"
    side.write_text(side.read_text().replace("endianness = little", "endianness = middle"))
    with pytest.raises(ValueError, match="endianness"):
        read_checkpoint(path)


def test_fit_slope_exact_and_noisy():
    eps = np.array([0.1, 0.05, 0.025, 0.0125])
    s, r = fit_slope(eps, 3.0 * eps**2)
    assert s == pytest.approx(2.0, abs=1e-12) and r < 1e-12
    rng = np.random.default_rng(0)
    s, r = fit_slope(eps, eps * np.exp(0.3 * rng.standard_normal(4)))
    assert r > 0
    with pytest.raises(ValueError):
        fit_slope(eps[:2], eps[:2])


def test_convergence_flags():
    t = ConvergenceTable(eps=[0.1, 0.05, 0.025], error_first=[1.0, 0.1, 0.5], error_second=[1, 0.25, 0.0625])
    flags = t.flags()
    assert len(flags) == 1 and "slope_first" in flags[0]


def test_bisection_recovers_rk4_limit():
    # oracle: RK4 on y' = -lam y is stable up to dt ~ 2.785 / lam
    lam = 50.0

    def factory(h):
        z = -lam * h
        g = 1 + z + z**2 / 2 + z**3 / 6 + z**4 / 24
        return lambda y: g * y

    dt = bisect_stable_dt(factory, np.array([1.0]), lambda y: float(np.abs(y).max()), 1e-3, 200, rtol=1e-4)
    assert dt == pytest.approx(2.785293563 / lam, rel=2e-3)


def test_bisection_imaginary_axis():
    lam = 10.0

    def factory(h):
        z = 1j * lam * h
        g = 1 + z + z**2 / 2 + z**3 / 6 + z**4 / 24
        return lambda y: g * y

    with np.errstate(over="ignore", invalid="ignore"):
        dt = bisect_stable_dt(factory, np.array([1.0 + 0j]), lambda y: float(np.abs(y).max()), 1e-3, 2000,
                              rtol=1e-4)
    assert dt == pytest.approx(RK4_IMAG / lam, rel=1e-2)


def test_drift_oracle_limits():
    cfg = default_config()
    o = DriftOracle(cfg, 1e-8)
    X = o.solve(np.linspace(0, 1, 5))
    assert np.max(np.abs(X - X[0])) < 1e-7
    y0 = o.initial_state()
    assert y0[2] == pytest.approx(2 * cfg["run.blob_temperature"])


def test_converge_smoke():
    cfg = parse_config(SMALL + "run.eps_list = 0.2, 0.1, 0.05\n")
    tab = cmd_converge(cfg, ill_prepared=True)
    assert len(tab.rows()) == 3 and all(e > 0 for e in tab.error_first + tab.error_second + tab.error_ill)
    assert tab.error_second[-1] < tab.error_first[-1]


def test_verify_fault_injection():
    cfg = parse_config(SMALL)
    ok = {c.id: c.passed for c in run_checks(cfg)}
    bad = {c.id: c.passed for c in run_checks(cfg, inject="s2_asym")}
    for cid in ("collision.s_tables_symmetric.rational", "collision.symmetry.rational"):
        assert ok[cid] and not bad[cid]
    assert ok["collision.Q1_constant_sigma_form"] and ok["collision.constant_sigma_tables"]


def test_cli_simulate_outputs(tmp_path):
    cfgp = tmp_path / "c.cfg"
    cfgp.write_text(SMALL + "solver.model = second_order\n")
    out = tmp_path / "out"
    assert cli.main(["simulate", "--config", str(cfgp), "--out", str(out), "--threads", "1"]) == 0
    trace = read_csv(out / "trace.csv")
    assert trace["t"][0] == 0 and trace["t"][-1] == pytest.approx(0.1)
    f, meta = read_checkpoint(out / "state.bin")
    assert f.shape == (8, 8, 16, 16) and meta["model"] == "second_order"


def test_cli_equilibrium_constant(tmp_path):
    cfgp = tmp_path / "c.cfg"
    cfgp.write_text(SMALL + "solver.model = first_order\nrun.init = equilibrium\nrun.diag_every = 1\n")
    assert cli.main(["simulate", "--config", str(cfgp), "--out", str(tmp_path)]) == 0
    tr = read_csv(tmp_path / "trace.csv")
    assert np.ptp(tr["mass"]) < 1e-13 * tr["mass"][0] and np.ptp(tr["entropy"]) < 1e-13 * tr["entropy"][0]


def test_cli_malformed_config_leaves_no_output(tmp_path, capsys):
    cfgp = tmp_path / "bad.cfg"
    cfgp.write_text("grid.nx1 = many\n")
    out = tmp_path / "out"
    assert cli.main(["simulate", "--config", str(cfgp), "--out", str(out)]) == 1
    assert not out.exists()
    assert "grid.nx1" in capsys.readouterr().err


def test_cli_exit_codes(tmp_path, monkeypatch):
    cfgp = tmp_path / "c.cfg"
    cfgp.write_text(SMALL)

    def boom(*a, **k):
        raise NumericalFailure("non-finite state", 3)

    monkeypatch.setattr(cli, "cmd_simulate", boom)
    assert cli.main(["simulate", "--config", str(cfgp), "--out", str(tmp_path)]) == 2
    monkeypatch.undo()
    assert cli.main(["verify", "--config", str(cfgp), "--out", str(tmp_path), "--inject", "s2_asym"]) == 3
    rows = read_csv(tmp_path / "verify.csv")
    assert set(rows) == {"id", "module", "measured", "tolerance", "pass"}
    assert cli.main(["simulate", "--config", str(cfgp), "--threads", "0"]) == 1
