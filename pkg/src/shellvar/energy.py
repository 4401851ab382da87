"""Stored energy densities, the convex Gamma library, loads and the total functional.

Two density families are supported:

* ``Helfrich``: ``(k_c/2 (2H + c0)^2 + k_bar K + lam) sqrt_a``.
* ``PolyFamily``: a sum of trace powers ``tr(G(u, v)^(gamma/2))`` of the matrices
  ``G = m_ab(u) g^a(v) (x) g^b(v)`` plus a convex ``Gamma(sqrt_a, eps H sqrt_a,
  eps^2 K sqrt_a)``.

Nonzero eigenvalues of ``G`` are those of the 2x2 product ``S Q`` with
``S = m_ab(u)`` and ``Q = (g^a . g^b)``, the inverse of the reference offset
metric. The trace power is therefore a function of ``t = tr(SQ)`` and
``d = det S det Q`` only, which is what the hot path uses.

Gradients: the discrete energy is ``psi -> A = D psi -> a3(A) -> B = D a3 ->
sum_nodes w W(A, B)``. Node-local maps are differentiated with forward-mode
duals (12 tangents per node); the linear stencil stages are transposed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .admissibility import check_admissible, m_membership, orientation_margins
from .dual import Dual, value
from .errors import AdmissibilityError, NumericDomainError, ShapeError, SpecError
from .geometry import (
    differentiate,
    differentiate_adjoint,
    form_components,
    frame,
    mean_gauss,
)

# ---------------------------------------------------------------------------
# specs


@dataclass(frozen=True)
class Helfrich:
    k_c: float = 1.0
    c0: float = 0.0
    k_bar: float = 0.0
    lam: float = 0.0

    def __post_init__(self):
        if not self.k_c > 0:
            raise SpecError(f"helfrich k_c must be > 0, got {self.k_c}")
        for name in ("k_c", "c0", "k_bar", "lam"):
            if not np.isfinite(getattr(self, name)):
                raise SpecError(f"helfrich {name} must be finite")

    def to_dict(self):
        return {"type": "helfrich", "k_c": self.k_c, "c0": self.c0,
                "k_bar": self.k_bar, "lambda": self.lam}


@dataclass(frozen=True)
class PolyTerm:
    a: float
    b: float
    gamma: float = 2.0
    u: float = 0.0
    v: float = 0.0
    w: float = 0.0

    def __post_init__(self):
        if not self.a > 0:
            raise SpecError(f"a_i must be > 0 (a_i > 0), got {self.a}")
        if not self.b > 0:
            raise SpecError(f"b_i must be > 0 (b_i > 0), got {self.b}")
        if not self.gamma >= 2:
            raise SpecError(f"gamma_i = {self.gamma} violates γ_i ≥ 2")
        for name in ("a", "b", "gamma", "u", "v", "w"):
            if not np.isfinite(getattr(self, name)):
                raise SpecError(f"term coefficient {name} must be finite")

    def to_dict(self):
        return {"a": self.a, "b": self.b, "gamma": self.gamma,
                "u": self.u, "v": self.v, "w": self.w}


def _pos(m):
    """max(m, 0) for arrays; duals keep their tangent only where m > 0."""
    if isinstance(m, Dual):
        keep = m.val > 0
        return Dual(np.where(keep, m.val, 0.0), m.tan * keep)
    return np.maximum(m, 0.0)


@dataclass(frozen=True)
class Affine:
    """const + a_coef * a + b_coef * b + c_coef * c."""

    const: float = 0.0
    a: float = 0.0
    b: float = 0.0
    c: float = 0.0

    def __call__(self, a, b, c):
        return self.const + self.a * a + self.b * b + self.c * c

    def to_dict(self):
        return {"type": "affine", "const": self.const, "a": self.a, "b": self.b, "c": self.c}


@dataclass(frozen=True)
class MarginPower:
    """weight * (a + 2b + c)^r on side ``plus``, weight * (a - 2b + c)^r on ``minus``.

    The margin is clipped at 0, which keeps the primitive convex on all of R^3.
    """

    side: str = "plus"
    exponent: float = 1.0
    weight: float = 1.0

    def __post_init__(self):
        if self.side not in ("plus", "minus"):
            raise SpecError(f"margin side must be 'plus' or 'minus', got {self.side!r}")
        if not self.exponent >= 1:
            raise SpecError(f"margin exponent must be >= 1 for convexity, got {self.exponent}")
        if not self.weight >= 0:
            raise SpecError(f"margin weight must be >= 0, got {self.weight}")

    def __call__(self, a, b, c):
        s = 2.0 if self.side == "plus" else -2.0
        return self.weight * _pos(a + s * b + c) ** self.exponent

    def to_dict(self):
        return {"type": "margin_power", "side": self.side,
                "exponent": self.exponent, "weight": self.weight}


@dataclass(frozen=True)
class QuadOverLin:
    """weight * b^2 / a."""

    weight: float = 1.0

    def __post_init__(self):
        if not self.weight >= 0:
            raise SpecError(f"quad_over_lin weight must be >= 0, got {self.weight}")

    def __call__(self, a, b, c):
        return self.weight * b * b / a

    def to_dict(self):
        return {"type": "quad_over_lin", "weight": self.weight}


@dataclass(frozen=True)
class LogBarrier:
    """-mu [log(a - 2b + c) + log(a + 2b + c)]."""

    mu: float = 1.0

    def __post_init__(self):
        if not self.mu >= 0:
            raise SpecError(f"log barrier mu must be >= 0, got {self.mu}")

    def __call__(self, a, b, c):
        if self.mu == 0:
            return 0.0 * a
        return -self.mu * (np.log(a - 2.0 * b + c) + np.log(a + 2.0 * b + c))

    def to_dict(self):
        return {"type": "log_barrier", "mu": self.mu}


PRIMITIVES = {
    "affine": Affine,
    "margin_power": MarginPower,
    "quad_over_lin": QuadOverLin,
    "log_barrier": LogBarrier,
}


@dataclass(frozen=True)
class GammaSpec:
    terms: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        for t in self.terms:
            if not isinstance(t, tuple(PRIMITIVES.values())):
                raise SpecError(f"unsupported Gamma primitive {t!r}")

    @property
    def has_barrier(self):
        return any(isinstance(t, LogBarrier) and t.mu > 0 for t in self.terms)

    def __call__(self, a, b, c):
        return gamma_term(a, b, c, self)

    def to_dict(self):
        return [t.to_dict() for t in self.terms]


@dataclass(frozen=True)
class PolyFamily:
    terms: tuple
    gamma: GammaSpec = field(default_factory=GammaSpec)

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if not self.terms:
            raise SpecError("poly family needs at least one term")

    @property
    def gamma_max(self):
        return max(t.gamma for t in self.terms)

    def offsets(self):
        return sorted({t.v for t in self.terms} | {t.w for t in self.terms})

    def to_dict(self):
        return {"type": "poly", "terms": [t.to_dict() for t in self.terms],
                "gamma_spec": self.gamma.to_dict()}


@dataclass(frozen=True)
class EnergySpec:
    variant: object
    epsilon: float

    def __post_init__(self):
        if not (np.isfinite(self.epsilon) and self.epsilon > 0):
            raise SpecError(f"epsilon must be > 0, got {self.epsilon}")
        if not isinstance(self.variant, (Helfrich, PolyFamily)):
            raise SpecError(f"unknown energy variant {self.variant!r}")
        if isinstance(self.variant, PolyFamily):
            tol = self.epsilon * (1 + 1e-12)
            for i, t in enumerate(self.variant.terms):
                if abs(t.v) > tol or abs(t.w) > tol:
                    raise SpecError(
                        f"term {i}: v={t.v}, w={t.w} violate (v_i, w_i) ∈ [−ε, ε]² "
                        f"with ε={self.epsilon}"
                    )

    @property
    def is_helfrich(self):
        return isinstance(self.variant, Helfrich)

    def to_dict(self):
        return {"epsilon": self.epsilon, **self.variant.to_dict()}


@dataclass(frozen=True, eq=False)
class LoadSpec:
    """Force density f (paired with psi) and couple density m (paired with a3)."""

    f: np.ndarray
    m: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.f, dtype=float)
        m = np.asarray(self.m, dtype=float)
        if f.shape != m.shape or f.ndim != 3 or f.shape[-1] != 3:
            raise ShapeError(f"load fields must both be (nx, ny, 3), got {f.shape} and {m.shape}")
        if not (np.isfinite(f).all() and np.isfinite(m).all()):
            raise SpecError("load fields must be finite")
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "m", m)

    @classmethod
    def constant(cls, grid, f=(0.0, 0.0, 0.0), m=(0.0, 0.0, 0.0)):
        shape = grid.shape + (3,)
        return cls(np.broadcast_to(np.asarray(f, float), shape).copy(),
                   np.broadcast_to(np.asarray(m, float), shape).copy())

    @classmethod
    def zero(cls, grid):
        return cls.constant(grid)

    @property
    def is_zero(self):
        return not (self.f.any() or self.m.any())


# ---------------------------------------------------------------------------
# densities


def helfrich_density(H, K, sqrt_a, spec):
    return (0.5 * spec.k_c * (2.0 * H + spec.c0) ** 2 + spec.k_bar * K + spec.lam) * sqrt_a


def helfrich_w(a, b, c, spec, epsilon):
    """Helfrich density written in the variables (sqrt_a, eps H sqrt_a, eps^2 K sqrt_a)."""
    e = epsilon
    return (2.0 * spec.k_c * b * b / (e * e * a) + 2.0 * spec.k_c * spec.c0 * b / e
            + (0.5 * spec.k_c * spec.c0 ** 2 + spec.lam) * a + spec.k_bar * c / (e * e))


def gamma_term(a, b, c, spec):
    """Sum of Gamma primitives; a LogBarrier outside N is a domain error."""
    if spec.has_barrier:
        inside = m_membership(value(a), value(b), value(c))
        if not np.all(inside):
            raise NumericDomainError("log barrier evaluated outside N = {a-|b|>0, a-2|b|+c>0}")
    total = 0.0 * a
    for t in spec.terms:
        total = total + t(a, b, c)
    return total


def _trace_pow_td(t, d, gamma):
    """lam+^p + lam-^p with lam+- = t/2 +- sqrt(t^2/4 - d), p = gamma/2.

    Dual inputs get derivatives that stay smooth through repeated eigenvalues.
    """
    p = 0.5 * gamma
    tv, dv = value(t), value(d)
    half = 0.5 * tv
    r = np.sqrt(np.maximum(half * half - dv, 0.0))
    lp = half + r
    lm = np.maximum(half - r, 0.0)
    out = lp ** p + lm ** p
    if not (isinstance(t, Dual) or isinstance(d, Dual)):
        return out
    fp_p = p * lp ** (p - 1.0)
    fp_m = p * lm ** (p - 1.0)
    close = r <= 1e-6 * np.abs(tv)
    with np.errstate(divide="ignore", invalid="ignore"):
        delta = np.where(close, p * (p - 1.0) * half ** (p - 2.0) if p != 1 else 0.0,
                         (fp_p - fp_m) / (2.0 * np.where(close, 1.0, r)))
    F_t = 0.5 * (fp_p + fp_m) + half * delta
    F_d = -delta
    tan = 0.0
    if isinstance(t, Dual):
        tan = tan + F_t * t.tan
    if isinstance(d, Dual):
        tan = tan + F_d * d.tan
    return Dual(out, tan)


def reduced_trace_power(s11, s12, s22, Q, gamma):
    """tr((S Q)^(gamma/2)) for symmetric PSD S (components) and SPD Q (..., 2, 2)."""
    q11, q12, q22 = Q[..., 0, 0], Q[..., 0, 1], Q[..., 1, 1]
    t = s11 * q11 + 2.0 * s12 * q12 + s22 * q22
    d = (s11 * s22 - s12 * s12) * (q11 * q22 - q12 * q12)
    return _trace_pow_td(t, d, gamma)


def trace_power(G, gamma):
    """Sum of lambda^(gamma/2) over eigenvalues of symmetric PSD 3x3 matrices."""
    G = np.asarray(G, dtype=float)
    if G.shape[-2:] != (3, 3):
        raise ShapeError(f"expected (..., 3, 3), got {G.shape}")
    scale = np.abs(G).max() if G.size else 0.0
    if np.abs(G - np.swapaxes(G, -1, -2)).max(initial=0.0) > 1e-12 * max(scale, 1.0):
        raise NumericDomainError("trace_power needs a symmetric matrix")
    lam = np.linalg.eigvalsh(G)
    tr = np.trace(G, axis1=-2, axis2=-1)
    if (lam[..., 0] < -1e-12 * np.maximum(np.abs(tr), 1e-300)).any():
        raise NumericDomainError("matrix has a negative eigenvalue beyond the clamp threshold")
    return (np.maximum(lam, 0.0) ** (0.5 * gamma)).sum(axis=-1)


def g_matrix(forms, u, v, shell):
    """G(u, v) = m_ab(u) g^a(v) (x) g^b(v) per node, shape (nx, ny, 3, 3)."""
    m = forms.offset_metric(u)
    g = shell.dual_basis(v)
    return np.einsum("...ab,...ia,...jb->...ij", m, g, g)


def _offset_components(f, u):
    return (f["a11"] - 2.0 * u * f["b11"] + u * u * f["c11"],
            f["a12"] - 2.0 * u * f["b12"] + u * u * f["c12"],
            f["a22"] - 2.0 * u * f["b22"] + u * u * f["c22"])


def trace_sum(f, family, dual_metric):
    """sum_i a_i tr G(u_i, v_i)^(g/2) + b_i tr G(-u_i, w_i)^(g/2) from form components."""
    total = 0.0
    for t in family.terms:
        total = total + t.a * reduced_trace_power(*_offset_components(f, t.u),
                                                  dual_metric(t.v), t.gamma)
        total = total + t.b * reduced_trace_power(*_offset_components(f, -t.u),
                                                  dual_metric(t.w), t.gamma)
    return total


def _local(A, B, spec, dual_metric):
    """Density and geometric scalars from node gradients (arrays or duals)."""
    f = form_components(A, B)
    H, K = mean_gauss(f)
    sqrt_a = np.sqrt(f["a11"] * f["a22"] - f["a12"] * f["a12"])
    v = spec.variant
    if isinstance(v, Helfrich):
        W = helfrich_density(H, K, sqrt_a, v)
    else:
        e = spec.epsilon
        W = trace_sum(f, v, dual_metric) + gamma_term(sqrt_a, e * H * sqrt_a,
                                                      e * e * K * sqrt_a, v.gamma)
    return W, H, K, sqrt_a


def poly_density(forms, curv, spec, shell):
    """Per-node PolyFamily density from the forms and curvatures of psi."""
    if spec.is_helfrich:
        raise SpecError("poly_density needs a PolyFamily spec")
    f = forms.components()
    sqrt_a = np.sqrt(forms.det_a)
    e = spec.epsilon
    return trace_sum(f, spec.variant, shell.dual_metric) + gamma_term(
        sqrt_a, e * curv.H * sqrt_a, e * e * curv.K * sqrt_a, spec.variant.gamma)


def density(config, spec, shell):
    """Per-node density W together with H, K, sqrt_a."""
    W, H, K, sqrt_a = _local(config.grad_psi, config.grad_a3, spec, shell.dual_metric)
    return W, H, K, sqrt_a


def density_table(config, spec, shell):
    """Columns for the per-node CSV dump."""
    W, H, K, sqrt_a = density(config, spec, shell)
    mp, mm = orientation_margins(H, K, sqrt_a, spec.epsilon)
    i, j = np.meshgrid(np.arange(config.grid.nx), np.arange(config.grid.ny), indexing="ij")
    cols = {"node_i": i, "node_j": j, "W": W, "H": H, "K": K,
            "sqrt_a": sqrt_a, "m_plus": mp, "m_minus": mm}
    return {k: np.asarray(v).ravel() for k, v in cols.items()}


# ---------------------------------------------------------------------------
# integrals


def load_form(config, loads, grid):
    """Quadrature of f . psi + m . a3(psi)."""
    if loads.f.shape != grid.shape + (3,) or config.psi.shape != grid.shape + (3,):
        raise ShapeError("load fields and configuration must match the grid")
    integrand = (loads.f * config.psi).sum(-1) + (loads.m * config.a3).sum(-1)
    return float(grid.integrate(integrand))


def total_energy(config, spec, loads, shell, grid=None, bc=None):
    """I(psi) = integral of W minus the load form; inadmissible input raises."""
    grid = grid or config.grid
    report = check_admissible(config, shell, bc)
    if not report.ok:
        kinds = sorted({v["kind"] for v in report.violations})
        raise AdmissibilityError(
            f"configuration not admissible ({len(report.violations)} violation(s): "
            f"{', '.join(kinds)})", report)
    W = density(config, spec, shell)[0]
    return float(grid.integrate(W)) - load_form(config, loads, grid)


def _shifted_log(m):
    return m - 1.0 - np.log(m)


@dataclass
class Evaluation:
    """Objective value split into its parts, plus the configuration data used."""

    objective: float
    energy: float
    barrier: float
    penalty: float
    a3: np.ndarray
    sqrt_a: np.ndarray
    m_plus: np.ndarray
    m_minus: np.ndarray
    grad: np.ndarray | None = None


class Objective:
    """I(psi) + mu * barrier(margins) + normal penalty on gamma0.

    The barrier is the shifted log ``m - 1 - log m`` per margin, weighted by
    the quadrature weights; it is stationary and zero at unit margin.
    """

    def __init__(self, spec, loads, shell, bc=None, mu=0.0, penalty_weight=None):
        self.spec = spec
        self.loads = loads
        self.shell = shell
        self.bc = bc
        self.mu = float(mu)
        if penalty_weight is None:
            penalty_weight = bc.normal_penalty_weight if bc is not None else 0.0
        self.penalty_weight = float(penalty_weight)
        self.grid = shell.grid

    def with_mu(self, mu):
        return Objective(self.spec, self.loads, self.shell, self.bc, mu, self.penalty_weight)

    def _check_psi(self, psi):
        psi = np.asarray(psi, dtype=float)
        if psi.shape != self.grid.shape + (3,):
            raise ShapeError(f"psi must have shape {self.grid.shape + (3,)}, got {psi.shape}")
        return psi

    def _penalty(self, a3):
        if self.bc is None or self.penalty_weight == 0:
            return 0.0, None
        g = self.bc.gamma0
        diff = np.where(g[..., None], a3 - self.bc.target_a3, 0.0)
        return self.penalty_weight * float((diff * diff).sum()), 2.0 * self.penalty_weight * diff

    def evaluate(self, psi, grad=False):
        psi = self._check_psi(psi)
        grid, w = self.grid, self.grid.weights
        A = differentiate(psi, grid)
        if grad:
            a3d, _ = frame(Dual.seed(A, axes=2))
            a3 = a3d.val
        else:
            a3, _ = frame(A)
        B = differentiate(a3, grid)
        X = np.concatenate([A, B], axis=-1)
        if grad:
            X = Dual.seed(X, axes=2)
        W, H, K, sqrt_a = _local(X[..., :2], X[..., 2:], self.spec, self.shell.dual_metric)
        mp, mm = orientation_margins(H, K, sqrt_a, self.spec.epsilon)
        mpv, mmv = value(mp), value(mm)
        node = W
        barrier = 0.0
        if self.mu > 0:
            if not (mpv.min() > 0 and mmv.min() > 0):
                raise NumericDomainError("barrier evaluated at a non-positive margin")
            bnode = _shifted_log(mp) + _shifted_log(mm)
            barrier = float((w * value(bnode)).sum())
            node = node + self.mu * bnode
        Wv = value(W)
        if not np.isfinite(value(node)).all():
            raise NumericDomainError("non-finite energy density")
        f, m = self.loads.f, self.loads.m
        load = float((w * ((f * psi).sum(-1) + (m * a3).sum(-1))).sum())
        energy = float((w * Wv).sum()) - load
        penalty, dpen = self._penalty(a3)
        ev = Evaluation(energy + self.mu * barrier + penalty, energy, barrier, penalty,
                        a3, value(sqrt_a), mpv, mmv)
        if grad:
            nx, ny = grid.shape
            tan = np.broadcast_to(node.tan, (12, nx, ny)) * w
            gX = np.moveaxis(tan.reshape(3, 4, nx, ny), (0, 1), (2, 3))
            g_a3 = differentiate_adjoint(gX[..., 2:], grid) - w[..., None] * m
            if dpen is not None:
                g_a3 = g_a3 + dpen
            J = np.broadcast_to(a3d.tan, (6, nx, ny, 3))
            gA = gX[..., :2] + np.moveaxis(
                np.einsum("dxyk,xyk->dxy", J, g_a3).reshape(3, 2, nx, ny), (0, 1), (2, 3))
            ev.grad = differentiate_adjoint(gA, grid) - w[..., None] * f
        return ev

    def value(self, psi):
        return self.evaluate(psi).objective

    def gradient(self, psi):
        return self.evaluate(psi, grad=True).grad


def energy_gradient(config, spec, loads, shell, grid=None):
    """Gradient of the discrete I with respect to nodal psi, shape (nx, ny, 3)."""
    psi = config.psi if hasattr(config, "psi") else config
    return Objective(spec, loads, shell).gradient(psi)
