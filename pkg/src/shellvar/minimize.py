"""Constrained descent for the discrete total energy.

Outer loop: barrier continuation over mu. Inner loop: projected gradient steps
in a fixed Sobolev metric, with a feasibility filter (margins >= margin_floor,
nondegenerate frame) applied before the Armijo test. Dirichlet values on
gamma0 are pinned exactly; the normal condition on gamma0 is a penalty.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .admissibility import BoundaryConditions, check_admissible
from .energy import Objective
from .errors import (
    AdmissibilityError,
    DegenerateMetricError,
    DegenerateSurfaceError,
    NumericDomainError,
    ShapeError,
    SpecError,
)
from .geometry import SurfaceConfiguration, diff_matrix

log = logging.getLogger(__name__)

__all__ = [
    "BoundaryConditions", "SolverConfig", "MinimizeResult",
    "minimize", "apply_dirichlet", "trajectory_norms", "sobolev_metric", "shell_metric",
]


@dataclass(frozen=True)
class SolverConfig:
    max_outer: int = 4
    max_inner: int = 500
    mu0: float = 1e-2
    mu_decay: float = 0.1
    step0: float = 1.0
    shrink: float = 0.5
    armijo: float = 1e-4
    growth: float = 2.0
    grad_tol: float = 1e-8
    margin_floor: float = 1e-10
    normal_tol: float = 1e-9
    p: float = 2.0
    q: float = 2.0
    preconditioner: str = "sobolev"
    sobolev_tangential: tuple = (1e-2, 4.0, 0.0)
    sobolev_normal: tuple = (1e-2, 0.0, 4e-2)

    def __post_init__(self):
        for name in ("sobolev_tangential", "sobolev_normal"):
            object.__setattr__(self, name, tuple(float(s) for s in getattr(self, name)))
        checks = [
            (self.max_outer >= 1, "max_outer must be >= 1"),
            (self.max_inner >= 0, "max_inner must be >= 0"),
            (self.mu0 >= 0, "mu0 must be >= 0"),
            (0 < self.mu_decay < 1, "mu_decay must lie in (0, 1)"),
            (self.step0 > 0, "step0 must be > 0"),
            (0 < self.shrink < 1, "shrink must lie in (0, 1)"),
            (0 < self.armijo <= 0.5, "armijo constant must lie in (0, 0.5]"),
            (self.growth >= 1, "growth must be >= 1"),
            (self.grad_tol > 0, "grad_tol must be > 0"),
            (self.margin_floor > 0, "margin_floor must be > 0"),
            (self.normal_tol > 0, "normal_tol must be > 0"),
            (self.p >= 2, "p must be >= 2"),
            (self.q > 1, "q must be > 1"),
            (self.preconditioner in ("sobolev", "euclidean"),
             "preconditioner must be 'sobolev' or 'euclidean'"),
            (all(len(s) == 3 and s[0] > 0 and min(s) >= 0
                 for s in (self.sobolev_tangential, self.sobolev_normal)),
             "sobolev weights (mass, stiffness, bending) need mass > 0 and all >= 0"),
        ]
        for ok, msg in checks:
            if not ok:
                raise SpecError(msg)

    def mu_schedule(self):
        if self.mu0 == 0:
            return [0.0]
        return [self.mu0 * self.mu_decay ** k for k in range(self.max_outer)]

    def to_dict(self):
        d = dict(self.__dict__)
        d["sobolev_tangential"] = list(self.sobolev_tangential)
        d["sobolev_normal"] = list(self.sobolev_normal)
        return d


@dataclass
class MinimizeResult:
    psi_final: SurfaceConfiguration
    energy_history: list
    objective_history: list
    grad_norm_history: list
    margin_history: list
    stage_history: list
    stage_objectives: list
    norm_history: list
    admissibility: object
    converged: bool
    stalled: bool
    iterations: dict
    mu_values: list = field(default_factory=list)
    stage_status: list = field(default_factory=list)
    message: str = ""
    elapsed: float = 0.0

    def to_dict(self):
        return {
            "converged": bool(self.converged),
            "stalled": bool(self.stalled),
            "message": self.message,
            "iterations": dict(self.iterations),
            "mu_values": list(self.mu_values),
            "stage_status": list(self.stage_status),
            "energy_history": list(self.energy_history),
            "objective_history": list(self.objective_history),
            "grad_norm_history": list(self.grad_norm_history),
            "margin_history": list(self.margin_history),
            "stage_history": list(self.stage_history),
            "stage_objectives": list(self.stage_objectives),
            "norm_history": [list(n) for n in self.norm_history],
            "admissibility": self.admissibility.to_dict(),
        }


def apply_dirichlet(psi, bc):
    """Copy of psi with gamma0 nodes replaced by their targets."""
    psi = np.asarray(psi, dtype=float)
    if psi.shape != bc.target_psi.shape:
        raise ShapeError(f"psi shape {psi.shape} does not match bc {bc.target_psi.shape}")
    out = psi.copy()
    out[bc.gamma0] = bc.target_psi[bc.gamma0]
    return out


def trajectory_norms(psi, grid=None, p=2.0, q=2.0):
    """Discrete W^{1,p} norms of psi and a3(psi) and the L^q norm of sqrt_a."""
    grid = grid or psi.grid

    def w1p(field, grad):
        integrand = (np.abs(field) ** p).sum(-1) + (np.abs(grad) ** p).sum((-1, -2))
        return float(grid.integrate(integrand)) ** (1.0 / p)

    n1 = w1p(psi.psi, psi.grad_psi)
    n2 = w1p(psi.a3, psi.grad_a3)
    n3 = float(grid.integrate(psi.sqrt_a ** q)) ** (1.0 / q)
    return n1, n2, n3


def _diff_ops(grid):
    D1 = sp.csr_matrix(diff_matrix(grid.nx, grid.h1, grid.periodic1))
    D2 = sp.csr_matrix(diff_matrix(grid.ny, grid.h2, grid.periodic2))
    return sp.kron(D1, sp.identity(grid.ny)), sp.kron(sp.identity(grid.nx), D2)


def sobolev_metric(grid, weights=(1.0, 1.0, 0.0)):
    """Scalar node metric ``c0 M + c1 G^T W G + c2 G2^T W G2``.

    ``G`` and ``G2`` are the first- and second-derivative operators built from
    the same stencils as the energy, so the metric shares its near-null modes.
    """
    c0, c1, c2 = weights
    w = np.asarray(grid.weights).ravel()
    W = sp.diags(w)
    G1, G2 = _diff_ops(grid)
    P = c0 * W
    if c1:
        P = P + c1 * (G1.T @ W @ G1 + G2.T @ W @ G2)
    if c2:
        P = P + c2 * sum(X.T @ W @ X for X in (G1 @ G1, G1 @ G2, G2 @ G1, G2 @ G2))
    return sp.csc_matrix(P)


def shell_metric(shell, cfg, bc=None):
    """SPD metric on nodal displacements, split along the reference normal.

    Tangential components use ``cfg.sobolev_tangential``, the normal component
    ``cfg.sobolev_normal`` plus the linearized normal penalty on gamma0.
    """
    grid = shell.grid
    n = grid.nx * grid.ny
    Pt = sobolev_metric(grid, cfg.sobolev_tangential)
    Pn = sobolev_metric(grid, cfg.sobolev_normal)
    if bc is not None and bc.normal_penalty_weight > 0:
        G1, G2 = _diff_ops(grid)
        rows = sp.diags(bc.gamma0.ravel().astype(float))
        Pn = Pn + 2.0 * bc.normal_penalty_weight * (G1.T @ rows @ G1 + G2.T @ rows @ G2)
    nrm = shell.reference.a3.reshape(n, 3)
    Nb = sp.block_diag([np.outer(v, v) for v in nrm], format="csr")
    Tb = sp.identity(3 * n, format="csr") - Nb
    I3 = sp.identity(3)
    P = Tb @ sp.kron(Pt, I3) @ Tb + Nb @ sp.kron(Pn, I3) @ Nb
    return sp.csc_matrix(P)


class _Metric:
    def __init__(self, shell, free, cfg, bc):
        self.free = np.repeat(free.ravel(), 3)
        self.kind = cfg.preconditioner
        if self.kind == "sobolev":
            P = shell_metric(shell, cfg, bc)
            idx = np.flatnonzero(self.free)
            self.lu = spla.splu(sp.csc_matrix(P[idx][:, idx]))
        self.shape = shell.grid.shape + (3,)

    def direction(self, g):
        """-P^{-1} g on free nodes, 0 on gamma0."""
        g = g.ravel()
        d = np.zeros_like(g)
        if self.kind == "sobolev":
            d[self.free] = -self.lu.solve(g[self.free])
        else:
            d[self.free] = -g[self.free]
        return d.reshape(self.shape)


_INFEASIBLE = (DegenerateSurfaceError, DegenerateMetricError, NumericDomainError, FloatingPointError)


def minimize(initial, spec, loads, shell, bc=None, cfg=None, callback=None):
    """Barrier-continuation projected descent from an admissible initial configuration.

    ``callback(psi, stage)`` is called after every accepted step.
    """
    cfg = cfg or SolverConfig()
    t_start = time.perf_counter()
    grid = shell.grid
    if initial.grid.shape != grid.shape:
        raise ShapeError("initial configuration and shell live on different grids")
    if loads.f.shape != grid.shape + (3,):
        raise ShapeError("loads do not match the grid")
    report0 = check_admissible(initial, shell, bc)
    if bc is not None:
        psi0 = apply_dirichlet(initial.psi, bc)
        if np.abs(psi0 - initial.psi).max() > 1e-9:
            raise AdmissibilityError("initial configuration violates the Dirichlet condition", report0)
    else:
        psi0 = np.array(initial.psi)
    hard = [v for v in report0.violations if v["kind"] != "bc_a3"]
    floor_ok = min(report0.min_margin_plus, report0.min_margin_minus) >= cfg.margin_floor
    if hard or not floor_ok:
        raise AdmissibilityError(
            "initial configuration is not strictly admissible "
            f"(min margins {report0.min_margin_plus:.3g}, {report0.min_margin_minus:.3g})",
            report0)

    free = np.ones(grid.shape, dtype=bool) if bc is None else ~bc.gamma0
    metric = _Metric(shell, free, cfg, bc)
    base = Objective(spec, loads, shell, bc)

    energy_h, obj_h, gnorm_h, margin_h, stage_h = [], [], [], [], []
    stage_obj, norm_h = [], [trajectory_norms(initial, grid, cfg.p, cfg.q)]
    status = []
    psi = psi0
    accepted = inner_total = 0
    stalled = False
    stage_converged = False
    message = ""
    mus = cfg.mu_schedule()

    def pgnorm(g):
        return float(np.abs(g[free]).max()) if free.any() else 0.0

    for k, mu in enumerate(mus):
        obj = base.with_mu(mu)
        ev = obj.evaluate(psi, grad=True)
        gn = pgnorm(ev.grad)
        step = cfg.step0
        _record(ev, gn, k, energy_h, obj_h, gnorm_h, margin_h, stage_h)
        stage_converged = gn <= cfg.grad_tol
        stage_stall = False
        it = 0
        while not stage_converged and it < cfg.max_inner:
            it += 1
            inner_total += 1
            d = metric.direction(ev.grad)
            slope = float((ev.grad * d).sum())
            if not slope < 0:
                message = "non-descent direction"
                stalled = True
                break
            trial_step = min(step * cfg.growth, cfg.step0) if accepted else step
            new = None
            while trial_step >= 1e-16 * cfg.step0:
                cand = psi + trial_step * d
                if bc is not None:
                    cand = apply_dirichlet(cand, bc)
                try:
                    ev_c = obj.evaluate(cand)
                except _INFEASIBLE:
                    ev_c = None
                if (ev_c is not None
                        and min(ev_c.m_plus.min(), ev_c.m_minus.min()) >= cfg.margin_floor
                        and np.isfinite(ev_c.objective)
                        and ev_c.objective < ev.objective
                        and ev_c.objective <= ev.objective + cfg.armijo * trial_step * slope):
                    new = cand
                    break
                trial_step *= cfg.shrink
            if new is None:
                stage_stall = True
                break
            psi, step = new, trial_step
            accepted += 1
            if callback is not None:
                callback(psi, k)
            ev = obj.evaluate(psi, grad=True)
            gn = pgnorm(ev.grad)
            _record(ev, gn, k, energy_h, obj_h, gnorm_h, margin_h, stage_h)
            stage_converged = gn <= cfg.grad_tol
        stage_obj.append(ev.objective)
        status.append("converged" if stage_converged else "stalled" if stage_stall
                      else "non_descent" if stalled else "max_inner")
        if stage_stall and k == len(mus) - 1:
            # a stall in an intermediate stage only ends that stage
            stalled = True
            message = f"line search stalled in final stage {k} at |g| = {gn:.3g}"
        norm_h.append(trajectory_norms(SurfaceConfiguration.from_positions(psi, grid),
                                       grid, cfg.p, cfg.q))
        log.info("stage %d mu=%g iters=%d objective=%.12g |g|=%.3g", k, mu, it, ev.objective, gn)
        if stalled:
            break

    final = SurfaceConfiguration.from_positions(psi, grid)
    report = check_admissible(final, shell, bc, bc_tol=1e-9)
    normal_ok = True
    if bc is not None:
        normal_ok = report.bc_residuals["a3"] <= cfg.normal_tol
    hard = [v for v in report.violations if v["kind"] != "bc_a3"]
    converged = bool(stage_converged and not stalled and not hard and normal_ok)
    if not message:
        if converged:
            message = "converged"
        elif not stage_converged:
            message = "iteration limit reached before grad_tol"
        elif not normal_ok:
            message = f"normal boundary residual {report.bc_residuals['a3']:.3g} above normal_tol"
        else:
            message = "final configuration not admissible"
    return MinimizeResult(
        psi_final=final,
        energy_history=energy_h,
        objective_history=obj_h,
        grad_norm_history=gnorm_h,
        margin_history=margin_h,
        stage_history=stage_h,
        stage_objectives=stage_obj,
        norm_history=norm_h,
        admissibility=report,
        converged=converged,
        stalled=stalled,
        iterations={"outer": len(stage_obj), "inner": inner_total, "accepted": accepted},
        mu_values=mus[:len(stage_obj)],
        stage_status=status,
        message=message,
        elapsed=time.perf_counter() - t_start,
    )


def _record(ev, gn, k, energy_h, obj_h, gnorm_h, margin_h, stage_h):
    energy_h.append(ev.energy)
    obj_h.append(ev.objective)
    gnorm_h.append(gn)
    margin_h.append(float(min(ev.m_plus.min(), ev.m_minus.min())))
    stage_h.append(k)
