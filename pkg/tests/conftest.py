import numpy as np
import pytest

from gyrocoll.collision import CollisionModel, CrossSection
from gyrocoll.fields import FieldConfig, Profile, build_fields
from gyrocoll.phasegrid import build_grid

TWO_PI = 2 * np.pi


def make(nx=8, nr=16, nt=16, L=TWO_PI, phi=None, B=None, xs=None, tau=1.0, tol_mass=1e-5):
    grid = build_grid(nx, nx, L, L, nr, nt, tol_mass=tol_mass)
    cfg = FieldConfig(phi=phi or Profile("product", 0.0, 0.05, 1, 1),
                      B=B or Profile("harmonic", 1.0, 0.2, 1, 0), tau=tau)
    fields = build_fields(cfg, grid)
    return grid, fields, CollisionModel(grid, fields, xs or CrossSection("constant", 1.0))


@pytest.fixture(scope="session")
def setup():
    return make()


@pytest.fixture(scope="session")
def setup_rational():
    return make(xs=CrossSection("rational", a=0.5, b=1.0))


@pytest.fixture(scope="session")
def setup_uniform():
    """E = 0, B constant."""
    return make(phi=Profile("constant", 0.0), B=Profile("constant", 1.0))


def smooth_ker(grid, fields, F):
    X1, X2 = np.meshgrid(grid.x1, grid.x2, indexing="ij")
    a1, a2 = TWO_PI * X1 / grid.L1, TWO_PI * X2 / grid.L2
    r2 = grid.r[:, None] ** 2
    return F * fields.xb(1 + 0.3 * np.cos(a1) * np.cos(a2) + 0.1 * np.sin(a1 + 2 * a2)) * (1 + 0.1 * r2)


def random_f(grid, F, seed=0, amp=0.5):
    rng = np.random.default_rng(seed)
    return F * (1 + amp * rng.standard_normal(grid.shape))


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is not None and getattr(mod, "RESULTS", None):
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
