"""Membership tests for the admissible deformation set and the domain M.

All "almost everywhere" conditions are checked at every grid node.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np

from .errors import ReferenceDegeneracyError, ShapeError, SpecError
from .geometry import (
    CurvatureData,
    FundamentalForms,
    ParamGrid,
    SurfaceConfiguration,
    geometry_summary,
)

BC_TOL = 1e-9
EDGES = ("west", "east", "south", "north")


def m_membership(a, b, c):
    """True where ``a - |b| > 0`` and ``a - 2|b| + c > 0`` (works elementwise)."""
    a, b, c = np.asarray(a), np.asarray(b), np.asarray(c)
    out = (a - np.abs(b) > 0) & (a - 2.0 * np.abs(b) + c > 0)
    return bool(out) if out.ndim == 0 else out


def orientation_margins(H, K, sqrt_a, epsilon):
    """Return ``(m_plus, m_minus)`` = ``((1 +- 2 eps H + eps^2 K) sqrt_a)``."""
    e2K = epsilon * epsilon * K
    m_plus = (1.0 + 2.0 * epsilon * H + e2K) * sqrt_a
    m_minus = (1.0 - 2.0 * epsilon * H + e2K) * sqrt_a
    return m_plus, m_minus


def poly_variables(H, K, sqrt_a, epsilon):
    """The triple ``(sqrt_a, eps H sqrt_a, eps^2 K sqrt_a)``."""
    return sqrt_a, epsilon * H * sqrt_a, epsilon * epsilon * K * sqrt_a


@dataclass(frozen=True)
class MPoint:
    A: np.ndarray
    B: np.ndarray
    a: float
    b: float
    c: float

    @property
    def in_M(self):
        return m_membership(self.a, self.b, self.c)

    def to_dict(self):
        return {"A": np.asarray(self.A).tolist(), "B": np.asarray(self.B).tolist(),
                "a": float(self.a), "b": float(self.b), "c": float(self.c)}


# ---------------------------------------------------------------------------
# reference shell

@dataclass(frozen=True, eq=False)
class ShellConfig:
    """Half-thickness plus the reference midsurface and its geometry."""

    epsilon: float
    reference: SurfaceConfiguration
    forms: FundamentalForms
    curvature: CurvatureData
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if not (np.isfinite(self.epsilon) and self.epsilon > 0):
            raise SpecError(f"epsilon must be positive, got {self.epsilon}")
        ek = self.max_eps_kappa
        if not ek < 1.0:
            raise SpecError(
                f"reference violates max|eps*kappa| < 1 (got {ek:.6g}); shell too thick"
            )

    @classmethod
    def build(cls, reference, epsilon):
        forms, curv = geometry_summary(reference)
        return cls(float(epsilon), reference, forms, curv)

    @property
    def grid(self) -> ParamGrid:
        return self.reference.grid

    @property
    def max_eps_kappa(self):
        k = np.maximum(np.abs(self.curvature.kappa1), np.abs(self.curvature.kappa2))
        return float(self.epsilon * k.max())

    def _check_offset(self, v):
        if abs(v) > self.epsilon * (1 + 1e-12):
            raise SpecError(f"offset {v} outside [-eps, eps] with eps={self.epsilon}")

    def offset_metric(self, v):
        """Reference metric g_ab(v) = a - 2 v b + v^2 c per node."""
        self._check_offset(v)
        return self.forms.offset_metric(v)

    def dual_metric(self, v):
        """(g^a . g^b) = inverse of the offset metric; cached per offset."""
        key = ("Q", float(v))
        if key not in self._cache:
            g = self.offset_metric(v)
            det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] ** 2
            scale = np.abs(g).max(axis=(-1, -2)) ** 2
            bad = ~(det > 1e-14 * scale)
            if bad.any():
                raise ReferenceDegeneracyError(
                    f"reference offset metric singular at v={v} at "
                    f"{int(bad.sum())} node(s), first {np.argwhere(bad)[0].tolist()}"
                )
            Q = np.empty_like(g)
            Q[..., 0, 0] = g[..., 1, 1] / det
            Q[..., 1, 1] = g[..., 0, 0] / det
            Q[..., 0, 1] = Q[..., 1, 0] = -g[..., 0, 1] / det
            Q.setflags(write=False)
            self._cache[key] = Q
        return self._cache[key]

    def dual_basis(self, v):
        """Contravariant vectors g^a(v), shape ``(nx, ny, 3, 2)``, tangent to the reference."""
        Q = self.dual_metric(v)
        g_low = self.reference.grad_psi + v * self.reference.grad_a3
        return np.einsum("...ib,...ab->...ia", g_low, Q)

    def det_ratio(self, v):
        """det grad Phi(x, v) / sqrt_a = (1 - v k1)(1 - v k2)."""
        c = self.curvature
        return (1.0 - v * c.kappa1) * (1.0 - v * c.kappa2)


# ---------------------------------------------------------------------------
# boundary conditions

def _edge_mask(grid, edges):
    mask = np.zeros(grid.shape, dtype=bool)
    for e in edges:
        if e not in EDGES:
            raise SpecError(f"unknown boundary edge {e!r}; choose from {EDGES}")
        periodic = grid.periodic1 if e in ("west", "east") else grid.periodic2
        if periodic:
            raise SpecError(f"edge {e!r} lies along a periodic direction and has no boundary")
        if e == "west":
            mask[0, :] = True
        elif e == "east":
            mask[-1, :] = True
        elif e == "south":
            mask[:, 0] = True
        else:
            mask[:, -1] = True
    return mask


def gamma0_mask(grid, spec):
    """Boolean node mask from edge names or an explicit ``[[i, j], ...]`` list."""
    if isinstance(spec, str):
        spec = [spec]
    spec = list(spec)
    if spec and all(isinstance(s, str) for s in spec):
        mask = _edge_mask(grid, spec)
    else:
        mask = np.zeros(grid.shape, dtype=bool)
        for node in spec:
            i, j = (int(t) for t in node)
            if not (0 <= i < grid.nx and 0 <= j < grid.ny):
                raise SpecError(f"gamma0 node {[i, j]} outside the grid")
            mask[i, j] = True
    if not mask.any():
        raise SpecError("gamma0 must be non-empty")
    if (mask & ~grid.boundary_mask).any():
        bad = np.argwhere(mask & ~grid.boundary_mask)[0].tolist()
        raise SpecError(f"gamma0 node {bad} is not a boundary node")
    right = mask[:-1, :] & mask[1:, :]
    up = mask[:, :-1] & mask[:, 1:]
    if not (right.any() or up.any()):
        raise SpecError("gamma0 needs at least 2 contiguous boundary nodes")
    return mask


@dataclass(frozen=True, eq=False)
class BoundaryConditions:
    """Clamped set gamma0 with prescribed positions and normals."""

    gamma0: np.ndarray
    target_psi: np.ndarray
    target_a3: np.ndarray
    normal_penalty_weight: float = 1e6

    def __post_init__(self):
        g = np.asarray(self.gamma0, dtype=bool)
        if not g.any():
            raise SpecError("gamma0 must be non-empty")
        if self.target_psi.shape != g.shape + (3,) or self.target_a3.shape != g.shape + (3,):
            raise ShapeError("boundary targets must have shape (nx, ny, 3)")
        if not self.normal_penalty_weight >= 0:
            raise SpecError("normal_penalty_weight must be >= 0")
        n = np.linalg.norm(self.target_a3[g], axis=-1)
        if np.abs(n - 1.0).max() > 1e-10:
            raise SpecError("target_a3 must be unit length on gamma0")

    @classmethod
    def clamp(cls, reference, gamma0="all", normal_penalty_weight=1e6):
        """Clamp a reference configuration on edges / nodes (``"all"`` = every boundary node)."""
        grid = reference.grid
        if isinstance(gamma0, np.ndarray) and gamma0.dtype == bool:
            mask = gamma0
        elif gamma0 == "all":
            mask = np.array(grid.boundary_mask)
            if not mask.any():
                raise SpecError("grid has no boundary nodes to clamp")
        else:
            mask = gamma0_mask(grid, gamma0)
        return cls(mask, np.array(reference.psi), np.array(reference.a3),
                   float(normal_penalty_weight))

    @property
    def nodes(self):
        return np.argwhere(self.gamma0)

    def residuals(self, config):
        g = self.gamma0
        dpsi = np.linalg.norm(config.psi[g] - self.target_psi[g], axis=-1)
        da3 = np.linalg.norm(config.a3[g] - self.target_a3[g], axis=-1)
        return dpsi, da3


# ---------------------------------------------------------------------------
# report

@dataclass
class AdmissibilityReport:
    ok: bool
    min_sqrt_a: float
    min_margin_plus: float
    min_margin_minus: float
    max_eps_kappa: float
    violations: list
    bc_residuals: dict

    @property
    def violating_nodes(self):
        return sorted({tuple(v["node"]) for v in self.violations})

    def to_dict(self):
        return {
            "ok": bool(self.ok),
            "min_sqrt_a": self.min_sqrt_a,
            "min_margin_plus": self.min_margin_plus,
            "min_margin_minus": self.min_margin_minus,
            "max_eps_kappa": self.max_eps_kappa,
            "violations": list(self.violations),
            "bc_residuals": dict(self.bc_residuals),
        }


def _collect(violations, kind, bad, values):
    for i, j in np.argwhere(bad):
        violations.append({"node": [int(i), int(j)], "kind": kind, "value": float(values[i, j])})


def check_admissible(psi, shell, bc=None, bc_tol=BC_TOL):
    """Nodewise check of the admissible-set conditions for ``psi``."""
    if psi.grid.shape != shell.grid.shape:
        raise ShapeError(f"grid mismatch: {psi.grid.shape} vs {shell.grid.shape}")
    if bc is not None and bc.gamma0.shape != psi.grid.shape:
        raise ShapeError("boundary conditions do not match the grid")
    _, curv = geometry_summary(psi)
    eps = shell.epsilon
    m_plus, m_minus = orientation_margins(curv.H, curv.K, psi.sqrt_a, eps)
    ek = eps * np.maximum(np.abs(curv.kappa1), np.abs(curv.kappa2))

    violations = []
    _collect(violations, "sqrt_a", ~(psi.sqrt_a > 0), psi.sqrt_a)
    _collect(violations, "margin_plus", ~(m_plus > 0), m_plus)
    _collect(violations, "margin_minus", ~(m_minus > 0), m_minus)
    _collect(violations, "eps_kappa", ~(ek < 1.0), ek)

    res = {"psi": 0.0, "a3": 0.0}
    if bc is not None:
        dpsi, da3 = bc.residuals(psi)
        res = {"psi": float(dpsi.max()), "a3": float(da3.max())}
        for kind, r in (("bc_psi", dpsi), ("bc_a3", da3)):
            for (i, j), val in zip(bc.nodes, r):
                if not val <= bc_tol:
                    violations.append({"node": [int(i), int(j)], "kind": kind, "value": float(val)})

    return AdmissibilityReport(
        ok=not violations,
        min_sqrt_a=float(psi.sqrt_a.min()),
        min_margin_plus=float(m_plus.min()),
        min_margin_minus=float(m_minus.min()),
        max_eps_kappa=float(ek.max()),
        violations=violations,
        bc_residuals=res,
    )
