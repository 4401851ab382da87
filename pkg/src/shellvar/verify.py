"""Randomized certification of polyconvexity, coercivity and margin blow-up.

The probes work on the energy written in its polyconvexity variables
``(A, B, a, b, c)`` = ``(grad psi, grad a3, sqrt_a, eps H sqrt_a, eps^2 K sqrt_a)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .admissibility import MPoint, m_membership
from .energy import (
    PRIMITIVES,
    EnergySpec,
    GammaSpec,
    Helfrich,
    PolyFamily,
    gamma_term,
    helfrich_w,
    reduced_trace_power,
)
from .errors import PathError, SamplingError, SpecError, UnsupportedSpecError
from .geometry import bracket, cross, curvatures, fundamental_forms

TOL_CONVEX = 1e-10


# ---------------------------------------------------------------------------
# reference node


@dataclass(frozen=True)
class ReferenceNode:
    """Reference forms at a single node (flat by default)."""

    a: np.ndarray = field(default_factory=lambda: np.eye(2))
    b: np.ndarray = field(default_factory=lambda: np.zeros((2, 2)))
    c: np.ndarray = field(default_factory=lambda: np.zeros((2, 2)))

    @classmethod
    def from_shell(cls, shell, node):
        i, j = node
        f = shell.forms
        return cls(f.a[i, j].copy(), f.b[i, j].copy(), f.c[i, j].copy())

    def dual_metric(self, v):
        g = self.a - 2.0 * v * self.b + v * v * self.c
        return np.linalg.inv(g)


def _poly_trace(A, B, family, ref):
    """sum_i a_i F(A, B; u_i, v_i) + b_i F(A, B; -u_i, w_i) with S = (A+uB)^T (A+uB)."""
    total = 0.0
    for t in family.terms:
        for coef, u, v in ((t.a, t.u, t.v), (t.b, -t.u, t.w)):
            X = A + u * B
            s11 = (X[..., 0] * X[..., 0]).sum(-1)
            s12 = (X[..., 0] * X[..., 1]).sum(-1)
            s22 = (X[..., 1] * X[..., 1]).sum(-1)
            total = total + coef * reduced_trace_power(s11, s12, s22, ref.dual_metric(v), t.gamma)
    return total


class PolyconvexFunction:
    """The convex function of (A, B, a, b, c) whose composition gives the density."""

    def __init__(self, spec, reference=None, extra_term=None):
        self.reference = reference or ReferenceNode()
        self.extra_term = extra_term
        if isinstance(spec, tuple(PRIMITIVES.values())):
            spec = GammaSpec((spec,))
        if isinstance(spec, EnergySpec):
            self.epsilon = spec.epsilon
            spec = spec.variant
        else:
            self.epsilon = None
        if isinstance(spec, Helfrich) and self.epsilon is None:
            raise SpecError("Helfrich needs an EnergySpec carrying epsilon")
        if not isinstance(spec, (Helfrich, PolyFamily, GammaSpec)):
            raise SpecError(f"cannot probe {spec!r}")
        self.spec = spec

    @property
    def uses_matrices(self):
        return isinstance(self.spec, PolyFamily)

    def abc_part(self, a, b, c):
        s = self.spec
        if isinstance(s, Helfrich):
            out = helfrich_w(a, b, c, s, self.epsilon)
        elif isinstance(s, PolyFamily):
            out = gamma_term(a, b, c, s.gamma)
        else:
            out = gamma_term(a, b, c, s)
        if self.extra_term is not None:
            out = out + self.extra_term(a, b, c)
        return out

    def __call__(self, A, B, a, b, c):
        out = self.abc_part(a, b, c)
        if self.uses_matrices:
            out = out + _poly_trace(A, B, self.spec, self.reference)
        return out

    def at(self, P):
        return float(self(np.asarray(P.A), np.asarray(P.B), P.a, P.b, P.c))


# ---------------------------------------------------------------------------
# polyconvexity


def sample_m(rng, n, delta=1e-9):
    """Points of M: a log-uniform, |b| < a, c above the margin line by [delta, 10] a."""
    a = 10.0 ** rng.uniform(-2.0, 2.0, n)
    b = rng.uniform(-a, a)
    lo = 2.0 * np.abs(b) - a
    c = rng.uniform(lo + delta * a, lo + 10.0 * a)
    A = rng.standard_normal((n, 3, 2))
    B = rng.standard_normal((n, 3, 2))
    return A, B, a, b, c


@dataclass
class ConvexityReport:
    samples_tested: int
    violations: list
    max_violation: float
    passed: bool
    tol: float = TOL_CONVEX
    seed: int | None = None
    n_violations: int = 0

    def to_dict(self):
        return {"samples_tested": self.samples_tested, "n_violations": self.n_violations,
                "violations": self.violations,
                "max_violation": self.max_violation, "passed": bool(self.passed),
                "tol": self.tol, "seed": self.seed}


def _segment_in_m(P, Q, k=9):
    ts = np.arange(1, k + 1) / (k + 1)
    ok = np.ones(np.shape(P[2]), dtype=bool)
    for s in ts:
        ok &= m_membership(*(s * p + (1 - s) * q for p, q in zip(P[2:], Q[2:])))
    return ok


def convexity_gap(func, P, Q, t):
    """(lhs, rhs, gap, scale) for one or many segment tests."""
    t3 = t[..., None, None] if np.ndim(t) else t
    mid = [t3 * P[0] + (1 - t3) * Q[0], t3 * P[1] + (1 - t3) * Q[1]]
    mid += [t * p + (1 - t) * q for p, q in zip(P[2:], Q[2:])]
    wP, wQ = func(*P), func(*Q)
    lhs = func(*mid)
    rhs = t * wP + (1 - t) * wQ
    scale = t * np.abs(wP) + (1 - t) * np.abs(wQ)
    return lhs, rhs, lhs - rhs, scale


def polyconvexity_probe(spec, n=10_000, seed=0, sampler=sample_m, reference=None,
                        extra_term=None, tol=TOL_CONVEX, max_retries=20, max_records=100):
    """Seeded segment tests W(tP + (1-t)Q) <= t W(P) + (1-t) W(Q) on M."""
    if n < 1:
        raise SpecError("need at least one sample")
    func = PolyconvexFunction(spec, reference, extra_term)
    rng = np.random.default_rng(seed)
    P = list(sampler(rng, n))
    Q = list(sampler(rng, n))
    for _ in range(max_retries):
        bad = ~(_segment_in_m(P, Q) & m_membership(*P[2:]) & m_membership(*Q[2:]))
        if not bad.any():
            break
        fresh = sampler(rng, int(bad.sum()))
        for k in range(5):
            Q[k][bad] = fresh[k]
    else:
        raise SamplingError("could not draw segments inside M within the retry budget")
    t = rng.uniform(0.0, 1.0, n)
    lhs, rhs, gap, scale = convexity_gap(func, P, Q, t)
    rel = gap / np.maximum(scale, np.finfo(float).tiny)
    viol = np.flatnonzero(rel > tol)
    records = []
    for k in viol[np.argsort(-rel[viol])][:max_records]:
        records.append({
            "P": MPoint(P[0][k], P[1][k], P[2][k], P[3][k], P[4][k]).to_dict(),
            "Q": MPoint(Q[0][k], Q[1][k], Q[2][k], Q[3][k], Q[4][k]).to_dict(),
            "t": float(t[k]), "lhs": float(lhs[k]), "rhs": float(rhs[k]),
            "gap": float(gap[k]), "relative_gap": float(rel[k]),
        })
    max_v = float(max(rel.max(), 0.0))
    return ConvexityReport(n, records, max_v, bool(max_v <= tol), tol, seed, int(len(viol)))


def recheck_violation(record, spec, reference=None, extra_term=None, tol=TOL_CONVEX):
    """Re-evaluate a stored violation; True if it is still a violation."""
    func = PolyconvexFunction(spec, reference, extra_term)
    P, Q = record["P"], record["Q"]
    unpack = lambda d: (np.array(d["A"]), np.array(d["B"]), d["a"], d["b"], d["c"])  # noqa: E731
    _, _, gap, scale = convexity_gap(func, unpack(P), unpack(Q), record["t"])
    return bool(gap / max(scale, np.finfo(float).tiny) > tol)


# ---------------------------------------------------------------------------
# coercivity


@dataclass
class CoercivityReport:
    samples_tested: int
    empirical_C: float
    C2_shift: float
    p: float
    q: float
    gamma_i0: float
    u_i0: float
    identity_ratio: float
    identity_traces: list
    passed: bool
    seed: int | None = None

    def to_dict(self):
        return dict(self.__dict__)


def _random_rotations(rng, n):
    Q, R = np.linalg.qr(rng.standard_normal((n, 3, 3)))
    Q = Q * np.sign(np.diagonal(R, axis1=1, axis2=2))[:, None, :]
    det = np.linalg.det(Q)
    Q[det < 0, :, 2] *= -1.0
    return Q


def sample_states(rng, n, epsilon, reference=None):
    """Consistent (A, B) node states: B = -T diag(kappa) T^T A with |eps kappa| < 0.99.

    Sample 0 is the identity state of the reference (flat: A = [e1 e2], B = 0).
    """
    R = _random_rotations(rng, n)
    Msv = 10.0 ** rng.uniform(-1.0, 1.0, (n, 2))
    th1, th2 = rng.uniform(0, 2 * np.pi, (2, n))
    rot = lambda th: np.stack([np.stack([np.cos(th), -np.sin(th)], -1),  # noqa: E731
                               np.stack([np.sin(th), np.cos(th)], -1)], -2)
    M = rot(th1) @ (Msv[..., None] * rot(th2))
    A = R[..., :2] @ M
    th3 = rng.uniform(0, 2 * np.pi, n)
    T = R[..., :2] @ rot(th3)
    kappa = rng.uniform(-0.99, 0.99, (n, 2)) / epsilon
    S = -np.einsum("nia,na,nja->nij", T, kappa, T)
    B = S @ A
    ref = reference or ReferenceNode()
    L = np.linalg.cholesky(ref.a)
    A[0] = np.vstack([L.T, np.zeros((1, 2))])
    B[0] = 0.0
    return A, B


def coercivity_probe(spec, reference=None, n=10_000, seed=0, q=2.0):
    """Sampled infimum of trace-sum / (|A|^g + |u|^g |B|^g) with g = max_i gamma_i."""
    if not isinstance(spec, EnergySpec):
        raise SpecError("coercivity_probe needs an EnergySpec")
    if spec.is_helfrich:
        raise UnsupportedSpecError(
            "Helfrich density has no gradient coercivity: it does not grow with |grad psi|, "
            "so the inequality W >= C(|grad psi|^g + ...) cannot hold")
    fam = spec.variant
    ref = reference or ReferenceNode()
    i0 = int(np.argmax([t.gamma for t in fam.terms]))
    g, u0 = fam.terms[i0].gamma, fam.terms[i0].u
    rng = np.random.default_rng(seed)
    A, B = sample_states(rng, n, spec.epsilon, ref)
    num = _poly_trace(A, B, fam, ref)
    nA = np.sqrt((A * A).sum((-1, -2)))
    nB = np.sqrt((B * B).sum((-1, -2)))
    den = nA ** g + abs(u0) ** g * nB ** g
    ratio = num / den
    traces = []
    for t in fam.terms:
        for u, v in ((t.u, t.v), (-t.u, t.w)):
            X = A[0] + u * B[0]
            S = X.T @ X
            traces.append(float(reduced_trace_power(S[0, 0], S[0, 1], S[1, 1],
                                                    ref.dual_metric(v), t.gamma)))
    C = float(ratio.min())
    return CoercivityReport(n, C, 0.0, float(g), float(q), float(g), float(u0),
                            float(ratio[0]), traces, bool(C > 0), seed)


# ---------------------------------------------------------------------------
# blow-up


@dataclass
class BlowupReport:
    paths: list
    diverges_plus: bool
    diverges_minus: bool
    passed: bool
    rule: str
    summary: str

    def to_dict(self):
        return dict(self.__dict__)


def margin_path(side, margins):
    """(a, b, c) with the chosen margin equal to ``margins`` and the other equal to 2."""
    s = np.asarray(margins, dtype=float)
    b = (2.0 - s) / 4.0
    if side == "plus":
        b = -b
    elif side != "minus":
        raise SpecError(f"side must be 'plus' or 'minus', got {side!r}")
    return np.ones_like(s), b, s / 2.0


def _diverges(logm, W):
    """Growth per decade over the last half stays positive and does not decay."""
    slopes = np.diff(W) / -np.diff(logm)
    tail = slopes[len(slopes) // 2:]
    floor = 1e-8 * (1.0 + np.abs(W).max())
    if not (np.isfinite(tail).all() and (tail > floor).all()):
        return False
    return bool((tail[1:] >= 0.5 * tail[:-1]).all())


def blowup_probe(spec, steps=25, m_start=0.5, m_end=1e-12, extra_term=None):
    """Evaluate the (a, b, c)-part of the density as each margin -> 0+ with the rest bounded."""
    if steps < 4:
        raise SpecError("blowup_probe needs steps >= 4")
    func = PolyconvexFunction(spec, extra_term=extra_term)
    margins = np.geomspace(m_start, m_end, steps)
    if not (np.diff(margins) < 0).all():
        raise PathError("margin sequence must strictly decrease")
    paths, div = [], {}
    for side in ("plus", "minus"):
        a, b, c = margin_path(side, margins)
        inside = m_membership(a, b, c)
        if not inside.all():
            raise PathError(f"{side} path leaves N at margin {margins[~inside][0]:.3g}")
        W = np.array([func.abc_part(a[k], b[k], c[k]) for k in range(steps)], dtype=float)
        div[side] = _diverges(np.log10(margins), W)
        paths.append({"side": side, "margin_values": margins.tolist(), "W_values": W.tolist(),
                      "diverges": div[side]})
    passed = div["plus"] and div["minus"]
    bounded = [s for s in ("plus", "minus") if not div[s]]
    summary = ("density diverges as either margin tends to 0+" if passed else
               "density stays bounded as the margin tends to 0+ on side(s): " + ", ".join(bounded))
    rule = ("margins geometric from %g to %g; divergent iff the growth per decade over the "
            "last half of the path is positive and never drops below half its previous value"
            % (m_start, m_end))
    return BlowupReport(paths, div["plus"], div["minus"], passed, rule, summary)


# ---------------------------------------------------------------------------
# identities


def identity_checks(psi, z_values=None, oracle=None):
    """Max residuals of the bracket identities and of the offset-determinant identity.

    By default the right-hand sides use the discrete normal and curvatures of
    ``psi``. With an analytic ``oracle`` surface they use its exact area vector
    and curvatures, so the residuals measure discretization error.
    """
    forms = fundamental_forms(psi)
    curv = curvatures(forms)
    if oracle is None:
        n = cross(psi.grad_psi[..., 0], psi.grad_psi[..., 1])
        H, K = curv.H, curv.K
    else:
        exact = oracle.sample(psi.grid)
        n = exact.area_vector
        H, K = oracle.oracle(psi.grid)["H"], oracle.oracle(psi.grid)["K"]
    res = {
        "psi_psi": bracket(psi.grad_psi, psi.grad_psi) - n,
        "psi_a3": bracket(psi.grad_psi, psi.grad_a3) + H[..., None] * n,
        "a3_a3": bracket(psi.grad_a3, psi.grad_a3) - K[..., None] * n,
    }
    out = {k: float(np.linalg.norm(v, axis=-1).max()) for k, v in res.items()}
    z_values = z_values if z_values is not None else (-0.1, 0.1)
    det_a = forms.det_a
    worst = 0.0
    for z in z_values:
        g = forms.offset_metric(z)
        lhs = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]
        rhs = ((1 - z * curv.kappa1) * (1 - z * curv.kappa2)) ** 2 * det_a
        worst = max(worst, float((np.abs(lhs - rhs) / np.abs(rhs)).max()))
    out["offset_det"] = worst
    out["max"] = max(out["psi_psi"], out["psi_a3"], out["a3_a3"])
    return out


def verify_all(spec, shell=None, n_poly=10_000, n_coer=10_000, steps=25, seed=0, probes=None):
    """Run the requested probes and bundle the reports."""
    probes = probes or {"polyconvexity", "coercivity", "blowup"}
    out = {}
    ok = True
    if "polyconvexity" in probes:
        r = polyconvexity_probe(spec, n_poly, seed)
        out["polyconvexity"] = r.to_dict()
        ok &= r.passed
    if "coercivity" in probes:
        if spec.is_helfrich:
            out["coercivity"] = {"skipped": True, "passed": None,
                                 "reason": "Helfrich density has no gradient coercivity"}
        else:
            r = coercivity_probe(spec, n=n_coer, seed=seed)
            out["coercivity"] = r.to_dict()
            ok &= r.passed
    if "blowup" in probes:
        r = blowup_probe(spec, steps)
        out["blowup"] = r.to_dict()
        ok &= r.passed
    out["passed"] = bool(ok)
    return out
