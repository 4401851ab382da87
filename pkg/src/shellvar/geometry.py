"""Discrete differential geometry of parametric midsurfaces on structured grids.

Fields live on a tensor-product grid with node arrays shaped ``(nx, ny, ...)``.
Gradients append a trailing axis of length 2 (``d1``, ``d2``), so the gradient
of a 3-vector field has shape ``(nx, ny, 3, 2)``. The local routines
(`frame`, the form and curvature helpers, `bracket`) accept any leading shape
and also work on :class:`shellvar.dual.Dual` inputs.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np

from .dual import stack, value
from .errors import (
    DegenerateMetricError,
    DegenerateSurfaceError,
    InvalidGridError,
    ShapeError,
)

EPS_DEGENERATE = 1e-14


@dataclass(frozen=True)
class ParamGrid:
    nx: int
    ny: int
    h1: float
    h2: float
    x_origin: tuple = (0.0, 0.0)
    periodic1: bool = False
    periodic2: bool = False

    def __post_init__(self):
        if self.nx < 3 or self.ny < 3:
            raise InvalidGridError(f"need nx, ny >= 3, got {self.nx}x{self.ny}")
        if not (self.h1 > 0 and self.h2 > 0):
            raise InvalidGridError(f"grid spacings must be positive, got {self.h1}, {self.h2}")

    @property
    def shape(self):
        return (self.nx, self.ny)

    @property
    def periodic(self):
        return (self.periodic1, self.periodic2)

    @property
    def lengths(self):
        n1 = self.nx if self.periodic1 else self.nx - 1
        n2 = self.ny if self.periodic2 else self.ny - 1
        return (n1 * self.h1, n2 * self.h2)

    @property
    def area(self):
        L1, L2 = self.lengths
        return L1 * L2

    @functools.cached_property
    def boundary_mask(self):
        mask = np.zeros(self.shape, dtype=bool)
        if not self.periodic1:
            mask[0, :] = mask[-1, :] = True
        if not self.periodic2:
            mask[:, 0] = mask[:, -1] = True
        mask.setflags(write=False)
        return mask

    @functools.cached_property
    def axes(self):
        x1 = self.x_origin[0] + self.h1 * np.arange(self.nx)
        x2 = self.x_origin[1] + self.h2 * np.arange(self.ny)
        return x1, x2

    def coords(self):
        x1, x2 = self.axes
        return np.meshgrid(x1, x2, indexing="ij")

    @functools.cached_property
    def weights(self):
        """Quadrature weights: trapezoid on open directions, uniform on periodic ones."""
        w1 = _quad_weights(self.nx, self.h1, self.periodic1)
        w2 = _quad_weights(self.ny, self.h2, self.periodic2)
        w = np.outer(w1, w2)
        w.setflags(write=False)
        return w

    def integrate(self, f):
        """Quadrature of a nodal field over the parameter rectangle."""
        f = np.asarray(f)
        if f.shape[:2] != self.shape:
            raise ShapeError(f"field shape {f.shape} does not match grid {self.shape}")
        return np.tensordot(self.weights, f, axes=([0, 1], [0, 1]))

    def refine(self):
        """Grid with both spacings halved over the same rectangle."""
        nx = 2 * self.nx if self.periodic1 else 2 * self.nx - 1
        ny = 2 * self.ny if self.periodic2 else 2 * self.ny - 1
        return ParamGrid(nx, ny, self.h1 / 2, self.h2 / 2, self.x_origin,
                         self.periodic1, self.periodic2)


def _quad_weights(n, h, periodic):
    w = np.full(n, h)
    if not periodic:
        w[0] = w[-1] = h / 2
    return w


def build_grid(rect, nx, ny, periodic=(False, False)):
    """Grid over ``rect = ((x1_min, x1_max), (x2_min, x2_max))``.

    Spacing is ``L/(n-1)`` along open directions and ``L/n`` along periodic
    ones (the last node does not duplicate the first).
    """
    (a1, b1), (a2, b2) = rect
    L1, L2 = b1 - a1, b2 - a2
    if not (L1 > 0 and L2 > 0):
        raise InvalidGridError(f"degenerate rectangle {rect!r}")
    if nx < 3 or ny < 3:
        raise InvalidGridError(f"need nx, ny >= 3, got {nx}x{ny}")
    p1, p2 = bool(periodic[0]), bool(periodic[1])
    h1 = L1 / nx if p1 else L1 / (nx - 1)
    h2 = L2 / ny if p2 else L2 / (ny - 1)
    return ParamGrid(int(nx), int(ny), h1, h2, (float(a1), float(a2)), p1, p2)


# ---------------------------------------------------------------------------
# difference stencils

@functools.lru_cache(maxsize=64)
def diff_matrix(n, h, periodic):
    """1-D first-derivative matrix.

    Central differences inside (and everywhere when periodic). Open ends use a
    4-point one-sided second-order closure whose leading error term equals the
    central one (``+h^2 f'''/6``), so errors stay smooth across the boundary
    and derived fields (normals, their derivatives, curvatures) keep second
    order. With only 3 nodes the 3-point closure is used.
    """
    D = np.zeros((n, n))
    idx = np.arange(n)
    if periodic:
        D[idx, (idx - 1) % n] = -0.5
        D[idx, (idx + 1) % n] = 0.5
    else:
        inner = idx[1:-1]
        D[inner, inner - 1] = -0.5
        D[inner, inner + 1] = 0.5
        if n >= 4:
            D[0, :4] = [-2.0, 3.5, -2.0, 0.5]
            D[-1, -4:] = [-0.5, 2.0, -3.5, 2.0]
        else:
            D[0, :3] = [-1.5, 2.0, -0.5]
            D[-1, -3:] = [0.5, -2.0, 1.5]
    D /= h
    D.setflags(write=False)
    return D


def _check_field(field, grid):
    field = np.asarray(field, dtype=float)
    if field.ndim < 2 or field.shape[:2] != grid.shape:
        raise ShapeError(f"field shape {field.shape} does not match grid {grid.shape}")
    return field


def differentiate(field, grid):
    """Partial derivatives of a nodal field; output gains a trailing axis of 2."""
    field = _check_field(field, grid)
    D1 = diff_matrix(grid.nx, grid.h1, grid.periodic1)
    D2 = diff_matrix(grid.ny, grid.h2, grid.periodic2)
    d1 = np.tensordot(D1, field, axes=(1, 0))
    d2 = np.moveaxis(np.tensordot(D2, field, axes=(1, 1)), 0, 1)
    return np.stack([d1, d2], axis=-1)


def differentiate_adjoint(cot, grid):
    """Transpose of :func:`differentiate` (maps gradient cotangents to nodes)."""
    cot = np.asarray(cot, dtype=float)
    if cot.shape[:2] != grid.shape or cot.shape[-1] != 2:
        raise ShapeError(f"cotangent shape {cot.shape} does not match grid {grid.shape}")
    D1 = diff_matrix(grid.nx, grid.h1, grid.periodic1)
    D2 = diff_matrix(grid.ny, grid.h2, grid.periodic2)
    out = np.tensordot(D1.T, cot[..., 0], axes=(1, 0))
    out += np.moveaxis(np.tensordot(D2.T, cot[..., 1], axes=(1, 1)), 0, 1)
    return out


# ---------------------------------------------------------------------------
# local vector algebra (array or Dual)

def cross(u, v):
    return stack([
        u[..., 1] * v[..., 2] - u[..., 2] * v[..., 1],
        u[..., 2] * v[..., 0] - u[..., 0] * v[..., 2],
        u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0],
    ], axis=-1)


def dot(u, v):
    return (u * v).sum(axis=-1)


def frame(grad_psi, eps_degenerate=EPS_DEGENERATE):
    """Unit normal ``a3`` and area element ``sqrt_a`` from tangents ``(..., 3, 2)``."""
    n = cross(grad_psi[..., 0], grad_psi[..., 1])
    sqrt_a = np.sqrt(dot(n, n))
    bad = np.asarray(value(sqrt_a) <= eps_degenerate)
    if bad.any():
        nodes = np.argwhere(bad)
        raise DegenerateSurfaceError(
            f"|d1 psi ^ d2 psi| <= {eps_degenerate:g} at {len(nodes)} node(s), "
            f"first {nodes[0].tolist() if nodes.ndim > 1 else []}",
            nodes=nodes,
        )
    a3 = n / sqrt_a[..., None]
    return a3, sqrt_a


def form_components(A, B):
    """Covariant a, b (symmetrized), c components from ``grad psi`` and ``grad a3``."""
    A1, A2 = A[..., 0], A[..., 1]
    B1, B2 = B[..., 0], B[..., 1]
    return {
        "a11": dot(A1, A1), "a12": dot(A1, A2), "a22": dot(A2, A2),
        "b11": -dot(A1, B1), "b22": -dot(A2, B2),
        "b12": -0.5 * (dot(A1, B2) + dot(A2, B1)),
        "c11": dot(B1, B1), "c12": dot(B1, B2), "c22": dot(B2, B2),
    }


def mean_gauss(f):
    """Mean and Gaussian curvature from form components (trace/det of b a^-1)."""
    det_a = f["a11"] * f["a22"] - f["a12"] * f["a12"]
    H = 0.5 * (f["b11"] * f["a22"] - 2.0 * f["b12"] * f["a12"] + f["b22"] * f["a11"]) / det_a
    K = (f["b11"] * f["b22"] - f["b12"] * f["b12"]) / det_a
    return H, K


def _sym(x11, x12, x22):
    return np.stack([np.stack([x11, x12], -1), np.stack([x12, x22], -1)], -2)


# ---------------------------------------------------------------------------
# data types

@dataclass(frozen=True, eq=False)
class SurfaceConfiguration:
    """Midsurface positions with their tangents, unit normals and area element."""

    psi: np.ndarray
    grad_psi: np.ndarray
    a3: np.ndarray
    grad_a3: np.ndarray
    sqrt_a: np.ndarray
    grid: ParamGrid = field(repr=False)

    @classmethod
    def from_positions(cls, psi, grid):
        """Finite-difference configuration: a3 is formed at nodes, then differenced."""
        psi = _check_field(psi, grid)
        if psi.shape != grid.shape + (3,):
            raise ShapeError(f"psi must have shape {grid.shape + (3,)}, got {psi.shape}")
        A = differentiate(psi, grid)
        a3, sqrt_a = frame(A)
        return cls(psi, A, a3, differentiate(a3, grid), sqrt_a, grid)

    @property
    def area_vector(self):
        """d1 psi ^ d2 psi at every node."""
        return cross(self.grad_psi[..., 0], self.grad_psi[..., 1])

    def orthogonality_defect(self):
        return np.abs(np.einsum("ijk,ijka->ija", self.a3, self.grad_psi)).max()


@dataclass(frozen=True, eq=False)
class FundamentalForms:
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    a_inv: np.ndarray

    @property
    def det_a(self):
        return self.a[..., 0, 0] * self.a[..., 1, 1] - self.a[..., 0, 1] ** 2

    def components(self):
        return {
            "a11": self.a[..., 0, 0], "a12": self.a[..., 0, 1], "a22": self.a[..., 1, 1],
            "b11": self.b[..., 0, 0], "b12": self.b[..., 0, 1], "b22": self.b[..., 1, 1],
            "c11": self.c[..., 0, 0], "c12": self.c[..., 0, 1], "c22": self.c[..., 1, 1],
        }

    def offset_metric(self, z):
        """a - 2 z b + z^2 c, the metric of the parallel surface at offset z."""
        return self.a - 2.0 * z * self.b + z * z * self.c

    def cayley_hamilton_residual(self, curv):
        H = curv.H[..., None, None]
        K = curv.K[..., None, None]
        return np.abs(self.c - 2.0 * H * self.b + K * self.a).max(axis=(-1, -2))


@dataclass(frozen=True, eq=False)
class CurvatureData:
    H: np.ndarray
    K: np.ndarray
    kappa1: np.ndarray
    kappa2: np.ndarray


def forms_from_gradients(grad_psi, grad_a3):
    f = form_components(np.asarray(grad_psi), np.asarray(grad_a3))
    det_a = f["a11"] * f["a22"] - f["a12"] ** 2
    bad = det_a <= 0
    if np.any(bad):
        nodes = np.argwhere(np.atleast_1d(bad))
        raise DegenerateMetricError(f"det(a) <= 0 at {len(nodes)} node(s)")
    a_inv = _sym(f["a22"] / det_a, -f["a12"] / det_a, f["a11"] / det_a)
    return FundamentalForms(
        _sym(f["a11"], f["a12"], f["a22"]),
        _sym(f["b11"], f["b12"], f["b22"]),
        _sym(f["c11"], f["c12"], f["c22"]),
        a_inv,
    )


def fundamental_forms(config):
    """First, second (symmetrized) and third fundamental forms of a configuration."""
    return forms_from_gradients(config.grad_psi, config.grad_a3)


def curvatures(forms):
    """Mean, Gaussian and principal curvatures (kappa1 >= kappa2)."""
    H, K = mean_gauss(forms.components())
    r = np.sqrt(np.maximum(H * H - K, 0.0))
    return CurvatureData(H, K, H + r, H - r)


def shell_jacobian(kappa1, kappa2, sqrt_a, z):
    """det of the offset map at height z: (1 - z k1)(1 - z k2) sqrt_a."""
    return (1.0 - z * kappa1) * (1.0 - z * kappa2) * sqrt_a


def bracket(grad1, grad2):
    """Symmetric vector-product bracket of two fields given their gradients."""
    return 0.5 * (cross(grad1[..., 0], grad2[..., 1]) + cross(grad2[..., 0], grad1[..., 1]))


def geometry_summary(config):
    """Forms and curvatures of a configuration in one call."""
    forms = fundamental_forms(config)
    return forms, curvatures(forms)
