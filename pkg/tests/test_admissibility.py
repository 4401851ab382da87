import json
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from shellvar.admissibility import (
    AdmissibilityReport,
    BoundaryConditions,
    MPoint,
    ShellConfig,
    check_admissible,
    gamma0_mask,
    m_membership,
    orientation_margins,
    poly_variables,
)
from shellvar.errors import ReferenceDegeneracyError, ShapeError, SpecError
from shellvar.geometry import SurfaceConfiguration, shell_jacobian
from shellvar.surfaces import make_surface


@pytest.mark.parametrize("abc,expected", [((1, 0, 0), True), ((1, 0.6, 0.3), True),
                                          ((1, 0.6, 0.1), False), ((1, -1, 5), False),
                                          ((0, 0, 1), False)])
def test_m_membership_examples(abc, expected):
    assert m_membership(*abc) is expected


def test_m_membership_vectorized():
    out = m_membership(np.array([1, 1]), np.array([0.6, 0.6]), np.array([0.3, 0.1]))
    assert out.tolist() == [True, False]


def test_margins_examples():
    assert orientation_margins(0.0, 0.0, 1.0, 0.3) == (1.0, 1.0)
    mp, mm = orientation_margins(-1.0, 1.0, 1.0, 0.1)
    assert mm == pytest.approx(1.21) and mp == pytest.approx(0.81)
    _, mm = orientation_margins(5.0, 25.0, 1.0, 0.2)
    assert mm == pytest.approx(0.0, abs=1e-15)


def test_margins_equal_shell_jacobian():
    torus = make_surface("torus")
    conf = torus.sample(torus.grid(16, 16))
    o = torus.oracle(conf.grid)
    eps = 0.2
    mp, mm = orientation_margins(o["H"], o["K"], conf.sqrt_a, eps)
    assert np.allclose(mm, shell_jacobian(o["kappa1"], o["kappa2"], conf.sqrt_a, eps), atol=1e-12)
    assert np.allclose(mp, shell_jacobian(o["kappa1"], o["kappa2"], conf.sqrt_a, -eps), atol=1e-12)


def _away_from_one(x):
    return abs(abs(x) - 1.0) > 1e-6


kappas = st.floats(-30, 30, allow_nan=False)
eps_st = st.floats(0.01, 0.5)


@settings(max_examples=400, deadline=None)
@given(kappas, kappas, eps_st, st.floats(0.1, 3))
def test_margin_positivity_characterization(k1, k2, eps, sqrt_a):
    # both margins > 0 iff both eps*kappa lie in (-1, 1), or both exceed 1, or both are below -1
    e1, e2 = eps * k1, eps * k2
    assume(_away_from_one(e1) and _away_from_one(e2))
    H, K = 0.5 * (k1 + k2), k1 * k2
    mp, mm = orientation_margins(H, K, sqrt_a, eps)
    inside = max(abs(e1), abs(e2)) < 1
    same_side = (e1 > 1 and e2 > 1) or (e1 < -1 and e2 < -1)
    assert (mp > 0 and mm > 0) == (inside or same_side)


@settings(max_examples=400, deadline=None)
@given(kappas, kappas, eps_st, st.floats(0.1, 3))
def test_m_membership_of_geometry_iff_thin(k1, k2, eps, sqrt_a):
    e1, e2 = eps * k1, eps * k2
    assume(_away_from_one(e1) and _away_from_one(e2))
    assume(abs(abs(e1 + e2) / 2 - 1) > 1e-6)
    H, K = 0.5 * (k1 + k2), k1 * k2
    inM = m_membership(*poly_variables(H, K, sqrt_a, eps))
    mp, mm = orientation_margins(H, K, sqrt_a, eps)
    assert inM == (max(abs(e1), abs(e2)) < 1)
    assert inM == (mp > 0 and mm > 0 and abs(eps * H) < 1)


def test_margins_alone_do_not_imply_thinness():
    # eps*kappa1 = eps*kappa2 = 1.5: both margins are positive, the shell is too thick
    eps, k = 0.1, 15.0
    mp, mm = orientation_margins(k, k * k, 1.0, eps)
    assert mp > 0 and mm > 0
    assert not m_membership(*poly_variables(k, k * k, 1.0, eps))


def test_seeded_equivalence_sample():
    rng = np.random.default_rng(0)
    e = rng.uniform(-3, 3, (10_000, 2))
    eps = rng.uniform(0.01, 0.5, 10_000)
    k1, k2 = e[:, 0] / eps, e[:, 1] / eps
    H, K = 0.5 * (k1 + k2), k1 * k2
    thin = np.abs(e).max(1) < 1
    inM = m_membership(*poly_variables(H, K, 1.0, eps))
    assert (inM == thin).all()


def test_mpoint():
    P = MPoint(np.eye(3, 2), np.zeros((3, 2)), 1.0, 0.6, 0.3)
    assert P.in_M
    d = P.to_dict()
    assert json.loads(json.dumps(d))["a"] == 1.0


def test_shell_config_rejects_thick_shell():
    cap = make_surface("sphere_cap", R=1.0)
    ref = cap.discretize(cap.grid(16, 16))
    with pytest.raises(SpecError, match="eps"):
        ShellConfig.build(ref, 1.5)
    with pytest.raises(SpecError):
        ShellConfig.build(ref, 0.0)


def test_dual_basis_is_dual():
    torus = make_surface("torus")
    shell = ShellConfig.build(torus.sample(torus.grid(12, 12)), 0.2)
    for v in (-0.2, 0.0, 0.1):
        g_low = shell.reference.grad_psi + v * shell.reference.grad_a3
        g_up = shell.dual_basis(v)
        assert np.allclose(np.einsum("...ia,...ib->...ab", g_up, g_low), np.eye(2), atol=1e-12)
        assert np.abs(np.einsum("...ia,...i->...a", g_up, shell.reference.a3)).max() < 1e-12
    with pytest.raises(SpecError):
        shell.dual_metric(0.3)


def test_det_ratio():
    cap = make_surface("sphere_cap", R=2.0)
    shell = ShellConfig.build(cap.sample(cap.grid(8, 8)), 0.1)
    assert np.allclose(shell.det_ratio(0.1), (1 + 0.05) ** 2)


def test_dual_metric_degenerate_reference():
    class Fake(ShellConfig):
        def offset_metric(self, v):
            return np.zeros(self.grid.shape + (2, 2))

    plate = make_surface("plate")
    ref = plate.discretize(plate.grid(4, 4))
    base = ShellConfig.build(ref, 0.1)
    fake = Fake(0.1, ref, base.forms, base.curvature)
    with pytest.raises(ReferenceDegeneracyError):
        fake.dual_metric(0.0)


# ---------------------------------------------------------------------------
# boundary sets


def _plate(n=6):
    s = make_surface("plate")
    g = s.grid(n, n)
    return g, s.discretize(g)


def test_gamma0_edges_and_nodes():
    g, _ = _plate()
    assert gamma0_mask(g, ["west"]).sum() == 6
    assert gamma0_mask(g, ["west", "south"]).sum() == 11
    assert gamma0_mask(g, [[0, 0], [0, 1]]).sum() == 2


@pytest.mark.parametrize("spec,msg", [
    (["up"], "unknown boundary edge"),
    ([[2, 2], [2, 3]], "not a boundary node"),
    ([[0, 0]], "contiguous"),
    ([[0, 0], [0, 2]], "contiguous"),
    ([], "non-empty"),
    ([[9, 0], [8, 0]], "outside"),
])
def test_gamma0_invalid(spec, msg):
    g, _ = _plate()
    with pytest.raises(SpecError, match=msg):
        gamma0_mask(g, spec)


def test_gamma0_periodic_edge():
    torus = make_surface("torus")
    with pytest.raises(SpecError, match="periodic"):
        gamma0_mask(torus.grid(6, 6), ["west"])
    with pytest.raises(SpecError):
        BoundaryConditions.clamp(torus.discretize(torus.grid(6, 6)), "all")


def test_clamp_and_residuals():
    g, ref = _plate()
    bc = BoundaryConditions.clamp(ref, ["north", "east"], 10.0)
    assert bc.normal_penalty_weight == 10.0
    dpsi, da3 = bc.residuals(ref)
    assert dpsi.max() == 0 and da3.max() == 0
    assert len(bc.nodes) == 11


def test_target_a3_must_be_unit():
    g, ref = _plate()
    with pytest.raises(SpecError):
        BoundaryConditions(g.boundary_mask.copy(), ref.psi, 2 * ref.a3)
    with pytest.raises(ShapeError):
        BoundaryConditions(g.boundary_mask.copy(), ref.psi[:-1], ref.a3)


# ---------------------------------------------------------------------------
# admissibility reports


def test_reference_plate_ok():
    g, ref = _plate()
    shell = ShellConfig.build(ref, 0.1)
    rep = check_admissible(ref, shell, BoundaryConditions.clamp(ref))
    assert rep.ok
    assert rep.min_margin_plus == pytest.approx(1) and rep.min_margin_minus == pytest.approx(1)
    assert set(rep.to_dict()) == {"ok", "min_sqrt_a", "min_margin_plus", "min_margin_minus",
                                  "max_eps_kappa", "violations", "bc_residuals"}
    json.dumps(rep.to_dict())


def test_thick_sphere_not_admissible():
    cap = make_surface("sphere_cap", R=1.0)
    g = cap.grid(32, 32)
    psi = cap.discretize(g)
    shell = ShellConfig.build(make_surface("plate").discretize(g), 1.5)
    rep = check_admissible(psi, shell)
    assert not rep.ok
    assert rep.max_eps_kappa == pytest.approx(1.5, rel=2e-2)
    assert "eps_kappa" in {v["kind"] for v in rep.violations}


def test_boundary_displacement_violation():
    g, ref = _plate()
    shell = ShellConfig.build(ref, 0.1)
    bc = BoundaryConditions.clamp(ref, ["west"])
    psi = ref.psi.copy()
    psi[0, 2, 2] += 0.1
    rep = check_admissible(SurfaceConfiguration.from_positions(psi, g), shell, bc)
    assert not rep.ok
    assert rep.bc_residuals["psi"] == pytest.approx(0.1)
    assert (0, 2) in rep.violating_nodes
    kinds = {v["kind"] for v in rep.violations}
    assert "bc_psi" in kinds


def test_folded_configuration_has_margin_violations():
    g, ref = _plate(41)
    x1, x2 = g.coords()
    psi = ref.psi.copy()
    psi[..., 2] = 0.05 * np.sin(6 * math.pi * x1)   # curvature ~ 18 > 1/eps
    shell = ShellConfig.build(ref, 0.1)
    rep = check_admissible(SurfaceConfiguration.from_positions(psi, g), shell)
    assert not rep.ok
    kinds = {v["kind"] for v in rep.violations}
    assert kinds & {"margin_plus", "margin_minus", "eps_kappa"}


def test_grid_mismatch():
    _, ref = _plate(6)
    _, other = _plate(7)
    with pytest.raises(ShapeError):
        check_admissible(other, ShellConfig.build(ref, 0.1))


def test_report_dataclass_roundtrip():
    r = AdmissibilityReport(True, 1.0, 1.0, 1.0, 0.0, [], {"psi": 0.0, "a3": 0.0})
    assert r.violating_nodes == []
