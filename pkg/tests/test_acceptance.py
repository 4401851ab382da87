"""The ten acceptance criteria, at their stated tolerances.

Each test records a one-line PASS/FAIL verdict that is printed in the
terminal summary (see conftest.py).
"""

import math
import time

import numpy as np
import pytest
from conftest import criterion, random_helfrich, random_poly, random_state

from shellvar import (
    Affine,
    BoundaryConditions,
    EnergySpec,
    GammaSpec,
    Helfrich,
    LoadSpec,
    LogBarrier,
    MarginPower,
    PolyFamily,
    PolyTerm,
    QuadOverLin,
    ShellConfig,
    SolverConfig,
    SurfaceConfiguration,
    check_admissible,
    curvatures,
    energy_gradient,
    make_surface,
    minimize,
    total_energy,
)
from shellvar.geometry import forms_from_gradients, geometry_summary
from shellvar.verify import (
    blowup_probe,
    coercivity_probe,
    identity_checks,
    polyconvexity_probe,
    recheck_violation,
)

EPS = 0.1
ONE_TERM = EnergySpec(PolyFamily((PolyTerm(1.0, 1.0, 2.0, 0.1, 0.0, 0.0),),
                                 GammaSpec((LogBarrier(1.0),))), EPS)
THREE_TERMS = EnergySpec(PolyFamily(
    (PolyTerm(1.0, 1.0, 2.0, 0.1, 0.0, 0.0),
     PolyTerm(0.5, 2.0, 3.0, -0.05, 0.05, -0.1),
     PolyTerm(2.0, 0.3, 4.0, 0.2, -0.1, 0.08)),
    GammaSpec((Affine(0.5, 1.0, -2.0, 0.3), QuadOverLin(1.0), LogBarrier(0.5)))), EPS)


def test_criterion_01_curvature_oracle():
    with criterion(1, "sphere-cap curvature oracle and 2nd-order convergence"):
        t0 = time.perf_counter()
        cap = make_surface("sphere_cap", R=1.0, colatitude=(math.pi / 6, 5 * math.pi / 6))
        grid = cap.grid(64, 64)
        errs = []
        for g in (grid, grid.refine()):
            _, k = geometry_summary(cap.discretize(g))
            errs.append((np.abs(k.H + 1.0).max(), np.abs(k.K - 1.0).max()))
        elapsed = time.perf_counter() - t0
        (eH, eK), (eH2, eK2) = errs
        print(f"64x64: max|H+1|={eH:.3e} max|K-1|={eK:.3e}; ratios {eH / eH2:.3f}, {eK / eK2:.3f}; "
              f"{elapsed:.3f}s")
        assert eH <= 5e-3 and eK <= 1e-2
        assert eH / eH2 >= 3.5 and eK / eK2 >= 3.5
        assert elapsed < 1.0


def test_criterion_02_gauss_bonnet_torus():
    with criterion(2, "Gauss-Bonnet on the 128x128 periodic torus"):
        t0 = time.perf_counter()
        torus = make_surface("torus", R=2.0, r=0.5)
        grid = torus.grid(128, 128)
        conf = torus.discretize(grid)
        _, k = geometry_summary(conf)
        total = float(grid.integrate(k.K * conf.sqrt_a))
        elapsed = time.perf_counter() - t0
        print(f"integral K dA = {total:.3e}; {elapsed:.3f}s")
        assert grid.periodic == (True, True)
        assert abs(total) <= 1e-6
        assert elapsed < 1.0


def test_criterion_03_helfrich_cap_scale_invariance():
    # With the bending rigidity k_c = 1/2 the pure-bending density is H^2 sqrt_a,
    # whose cap integral is 2 pi (cos t1 - cos t2). With k_c = 1 it doubles.
    with criterion(3, "Helfrich pure-bending cap energy, R = 1 and R = 3"):
        t1, t2 = math.pi / 6, 5 * math.pi / 6
        target = 2 * math.pi * (math.cos(t1) - math.cos(t2))
        values = {}
        for k_c, scale in ((0.5, 1.0), (1.0, 2.0)):
            spec = EnergySpec(Helfrich(k_c=k_c), EPS)
            for R in (1.0, 3.0):
                cap = make_surface("sphere_cap", R=R, colatitude=(t1, t2))
                grid = cap.grid(128, 128)
                conf = cap.discretize(grid)
                shell = ShellConfig.build(conf, EPS)
                values[k_c, R] = total_energy(conf, spec, LoadSpec.zero(grid), shell)
            for R in (1.0, 3.0):
                rel = abs(values[k_c, R] - scale * target) / (scale * target)
                print(f"k_c={k_c} R={R}: E={values[k_c, R]:.10f} target={scale * target:.10f} "
                      f"rel={rel:.2e}")
                assert rel <= 1e-3
            agree = abs(values[k_c, 1.0] - values[k_c, 3.0]) / abs(values[k_c, 1.0])
            print(f"k_c={k_c}: R-independence {agree:.2e}")
            assert agree <= 1e-6


def test_criterion_04_bracket_identities():
    with criterion(4, "bracket identities with O(h^2) decay on sphere cap and torus"):
        for name in ("sphere_cap", "torus"):
            surf = make_surface(name)
            grid = surf.grid(64, 64)
            coarse = identity_checks(surf.discretize(grid), oracle=surf)
            fine = identity_checks(surf.discretize(grid.refine()), oracle=surf)
            # discrete right-hand sides: the identities hold to roundoff
            selfc = identity_checks(surf.discretize(grid))
            print(f"{name}: residuals {[f'{coarse[k]:.2e}' for k in ('psi_psi', 'psi_a3', 'a3_a3')]}, "
                  f"ratios {[round(coarse[k] / fine[k], 3) for k in ('psi_psi', 'psi_a3', 'a3_a3')]}, "
                  f"self-consistent max {selfc['max']:.1e}")
            for key in ("psi_psi", "psi_a3", "a3_a3"):
                assert coarse[key] <= 5e-3
                assert coarse[key] / fine[key] >= 3.5
            assert selfc["max"] <= 5e-3


def test_criterion_05_offset_determinant():
    with criterion(5, "offset-determinant identity at 1e4 oracle nodes"):
        rng = np.random.default_rng(5)
        worst = 0.0
        surfaces = [make_surface("sphere_cap", R=1.3), make_surface("torus", R=2.0, r=0.5),
                    make_surface("cylinder", R=0.7)]
        n = 10_000
        pick = rng.integers(0, len(surfaces), n)
        for s_idx, surf in enumerate(surfaces):
            m = int((pick == s_idx).sum())
            (lo1, hi1), (lo2, hi2) = surf.default_rect()
            x1 = rng.uniform(lo1, hi1, m)
            x2 = rng.uniform(lo2, hi2, m)
            forms = forms_from_gradients(surf.tangents(x1, x2), surf.normal_gradient(x1, x2))
            _, _, k1, k2 = surf.curvature(x1, x2)
            kmax = np.maximum(np.abs(k1), np.abs(k2))
            z = rng.uniform(-0.95, 0.95, m) / kmax
            g = forms.a - 2 * z[:, None, None] * forms.b + (z * z)[:, None, None] * forms.c
            lhs = np.linalg.det(g)
            rhs = ((1 - z * k1) * (1 - z * k2)) ** 2 * forms.det_a
            worst = max(worst, float((np.abs(lhs - rhs) / np.abs(rhs)).max()))
        print(f"max relative residual over {n} nodes: {worst:.2e}")
        assert worst <= 1e-9


PRIMITIVES = [
    Affine(0.3, 1.0, -2.0, 0.5),
    MarginPower("plus", 1.0, 1.0),
    MarginPower("minus", 2.0, 0.7),
    MarginPower("plus", 3.5, 2.0),
    QuadOverLin(1.0),
    LogBarrier(1.0),
]


def test_criterion_06_polyconvexity_probe():
    with criterion(6, "polyconvexity probe: zero violations, planted -a^2 caught"):
        t0 = time.perf_counter()
        cases = [(f"primitive {p.to_dict()['type']}", GammaSpec((p,))) for p in PRIMITIVES]
        cases += [("family, 1 term", ONE_TERM), ("family, 3 terms", THREE_TERMS),
                  ("helfrich", EnergySpec(Helfrich(k_c=1, c0=1, k_bar=0.5, lam=1), EPS))]
        for label, spec in cases:
            rep = polyconvexity_probe(spec, n=10_000, seed=0)
            print(f"{label}: violations={rep.n_violations} max={rep.max_violation:.2e}")
            assert rep.n_violations == 0 and rep.passed
        planted = polyconvexity_probe(ONE_TERM, n=10_000, seed=0, extra_term=lambda a, b, c: -a * a)
        print(f"planted -a^2: violations={planted.n_violations}")
        assert not planted.passed and planted.n_violations >= 1
        assert recheck_violation(planted.violations[0], ONE_TERM,
                                 extra_term=lambda a, b, c: -a * a)
        elapsed = time.perf_counter() - t0
        print(f"total {elapsed:.2f}s")
        assert elapsed < 10.0


def test_criterion_07_blowup_discrimination():
    with criterion(7, "blow-up passes with a log barrier, fails for Helfrich"):
        with_barrier = [
            GammaSpec((LogBarrier(1.0),)),
            GammaSpec((LogBarrier(1e-3), Affine(0, 1, 0, 0))),
            GammaSpec((MarginPower("plus", 2.0, 1.0), LogBarrier(0.5))),
            ONE_TERM,
            THREE_TERMS,
        ]
        for spec in with_barrier:
            rep = blowup_probe(spec, steps=25)
            assert rep.passed and rep.diverges_plus and rep.diverges_minus
        for spec in (EnergySpec(Helfrich(), EPS),
                     EnergySpec(Helfrich(k_c=2, c0=-1, k_bar=0.5, lam=3), EPS)):
            rep = blowup_probe(spec, steps=25)
            print(f"helfrich: {rep.summary}")
            assert not rep.passed
            assert "bounded" in rep.summary


def test_criterion_08_coercivity_probe():
    with criterion(8, "coercivity: empirical C > 0, identity ratio and traces"):
        for spec in (ONE_TERM, THREE_TERMS):
            rep = coercivity_probe(spec, n=10_000, seed=0)
            fam = spec.variant
            t0 = fam.terms[int(np.argmax([t.gamma for t in fam.terms]))]
            print(f"{len(fam.terms)} term(s): empirical_C={rep.empirical_C:.4f} "
                  f"identity_ratio={rep.identity_ratio:.12f}")
            assert rep.empirical_C > 0
            # every trace term at the flat identity is tr(I_2) = 2
            assert np.allclose(rep.identity_traces, 2.0, rtol=0, atol=1e-14)
            expected = sum(2 * (t.a + t.b) for t in fam.terms) / 2 ** (t0.gamma / 2)
            assert rep.identity_ratio == pytest.approx(expected, rel=1e-14)
            assert rep.empirical_C <= rep.identity_ratio
        rep = coercivity_probe(ONE_TERM, n=10_000, seed=0)
        assert rep.identity_ratio == pytest.approx(2 * (1 + 1) / 2 ** (2 / 2), rel=1e-14)


def _fd_gradient(fun, psi, h=1e-6):
    g = np.zeros_like(psi)
    for idx in np.ndindex(psi.shape):
        p = psi.copy()
        p[idx] += h
        fp = fun(p)
        p[idx] -= 2 * h
        fm = fun(p)
        g[idx] = (fp - fm) / (2 * h)
    return g


@pytest.mark.parametrize("variant", ["helfrich", "poly"])
def test_criterion_09_gradient_vs_finite_differences(variant):
    from shellvar.energy import Objective

    with criterion(9, "analytic vs central-difference gradient, 20 configs per variant"):
        rng = np.random.default_rng(9 if variant == "helfrich" else 99)
        worst = 0.0
        for _ in range(20):
            conf, shell = random_state(rng, nx=7, ny=6)
            spec = random_helfrich(rng) if variant == "helfrich" else random_poly(rng)
            loads = LoadSpec(rng.standard_normal(conf.grid.shape + (3,)) * 0.1,
                             rng.standard_normal(conf.grid.shape + (3,)) * 0.1)
            g = energy_gradient(conf, spec, loads, shell)
            obj = Objective(spec, loads, shell)
            fd = _fd_gradient(obj.value, conf.psi)
            worst = max(worst, float(np.abs(g - fd).max() / np.abs(fd).max()))
        print(f"{variant}: max relative error {worst:.2e}")
        assert worst <= 1e-5


def test_criterion_10_minimizer():
    with criterion(10, "clamped plate: fixed point, loaded descent, admissible iterates"):
        t0 = time.perf_counter()
        surf = make_surface("plate")
        grid = surf.grid(33, 33)
        ref = surf.discretize(grid)
        shell = ShellConfig.build(ref, EPS)
        spec = EnergySpec(PolyFamily((PolyTerm(1.0, 1.0, 2.0, 0.1, 0.1, 0.1),),
                                     GammaSpec((Affine(0.0, -4.0, 0.0, 0.0),))), EPS)
        bc = BoundaryConditions.clamp(ref, "all")
        cfg = SolverConfig()

        rest = minimize(ref, spec, LoadSpec.zero(grid), shell, bc, cfg)
        print(f"zero load: grad={rest.grad_norm_history[0]:.1e} accepted={rest.iterations['accepted']}")
        assert rest.grad_norm_history[0] <= 1e-8
        assert rest.iterations["accepted"] == 0
        assert rest.converged

        iterates = []

        def record(psi, stage):
            conf = SurfaceConfiguration.from_positions(psi, grid)
            iterates.append(check_admissible(conf, shell, bc, bc_tol=cfg.normal_tol))

        f0 = 1e-3
        res = minimize(ref, spec, LoadSpec.constant(grid, (0.0, 0.0, -f0)), shell, bc, cfg,
                       callback=record)
        center = res.psi_final.psi[16, 16, 2]
        elapsed = time.perf_counter() - t0
        print(f"load -{f0}: converged={res.converged} steps={res.iterations['accepted']} "
              f"center w={center:.4e} {elapsed:.2f}s")
        assert res.converged
        obj = np.array(res.objective_history)
        assert (np.diff(obj) <= 0).all()
        assert res.energy_history[-1] < res.energy_history[0]
        assert center < 0
        assert iterates and all(r.ok for r in iterates)
        assert res.admissibility.ok
        assert elapsed < 30.0
