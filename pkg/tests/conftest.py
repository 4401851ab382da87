import contextlib

import numpy as np
import pytest

from shellvar import (
    Affine,
    EnergySpec,
    GammaSpec,
    Helfrich,
    LogBarrier,
    PolyFamily,
    PolyTerm,
    QuadOverLin,
    ShellConfig,
    SurfaceConfiguration,
    check_admissible,
    make_surface,
)
from shellvar.errors import ShellvarError

CRITERIA = {}


@contextlib.contextmanager
def criterion(number, title):
    """Record a pass/fail line for an acceptance criterion."""
    try:
        yield
    except BaseException as exc:
        CRITERIA[number] = (False, title, f"{type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}")
        raise
    CRITERIA.setdefault(number, (True, title, ""))


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        ok, title, detail = CRITERIA[n]
        line = f"criterion {n:2d} {'PASS' if ok else 'FAIL'}: {title}"
        terminalreporter.write_line(line + (f" ({detail})" if detail else ""))


# ---------------------------------------------------------------------------
# shared builders


def smooth_perturbation(grid, rng, amp, modes=3):
    """Sum of low-frequency products, periodic where the grid is periodic."""
    x1, x2 = grid.coords()
    L1, L2 = grid.lengths
    u1 = (x1 - grid.x_origin[0]) / L1
    u2 = (x2 - grid.x_origin[1]) / L2
    out = np.zeros(grid.shape + (3,))
    for _ in range(modes):
        k1, k2 = rng.integers(1, 3, size=2)
        p1, p2 = rng.uniform(0, 2 * np.pi, 2)
        out += rng.standard_normal(3) * (np.sin(2 * np.pi * k1 * u1 + p1)
                                         * np.sin(2 * np.pi * k2 * u2 + p2))[..., None]
    return amp * out / modes


def patch_surface(name):
    if name == "cylinder":
        return make_surface("cylinder", R=1.0, x1_range=(0.0, 1.0), x2_range=(0.0, 1.0))
    if name == "sphere_cap":
        return make_surface("sphere_cap", R=1.5, colatitude=(0.9, 2.0))
    return make_surface(name)


def random_state(rng, nx=9, ny=8, eps=0.1, amp=0.02, preset=None, tries=20):
    """Admissible (psi, shell) pair: a perturbed copy of a random reference patch."""
    preset = preset or rng.choice(["plate", "cylinder", "sphere_cap"])
    surf = patch_surface(preset)
    grid = surf.grid(nx, ny)
    ref = surf.discretize(grid)
    shell = ShellConfig.build(ref, eps)
    for _ in range(tries):
        psi = ref.psi + smooth_perturbation(grid, rng, amp)
        try:
            conf = SurfaceConfiguration.from_positions(psi, grid)
        except ShellvarError:
            continue
        if check_admissible(conf, shell).ok:
            return conf, shell
    raise RuntimeError("could not draw an admissible state")


def random_helfrich(rng, eps=0.1):
    return EnergySpec(Helfrich(k_c=rng.uniform(0.5, 2), c0=rng.uniform(-1, 1),
                               k_bar=rng.uniform(-1, 1), lam=rng.uniform(0, 2)), eps)


def random_poly(rng, eps=0.1, barrier=True):
    terms = []
    for _ in range(rng.integers(1, 4)):
        terms.append(PolyTerm(rng.uniform(0.5, 2), rng.uniform(0.5, 2),
                              float(rng.choice([2.0, 3.0, 4.0, 2.5])),
                              rng.uniform(-0.2, 0.2), rng.uniform(-eps, eps), rng.uniform(-eps, eps)))
    prims = [Affine(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)),
             QuadOverLin(rng.uniform(0, 2))]
    if barrier:
        prims.append(LogBarrier(rng.uniform(0.1, 1)))
    return EnergySpec(PolyFamily(tuple(terms), GammaSpec(tuple(prims))), eps)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def plate_shell():
    surf = make_surface("plate")
    grid = surf.grid(9, 9)
    ref = surf.discretize(grid)
    return ref, ShellConfig.build(ref, 0.1)
