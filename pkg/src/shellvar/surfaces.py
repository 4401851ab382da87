"""Built-in analytic midsurfaces with exact derivatives and curvature oracles.

Every preset knows its natural parameter rectangle and periodicity, and can
produce either an analytically sampled :class:`SurfaceConfiguration` (exact
tangents and normal derivatives) or a finite-difference one from positions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SpecError
from .geometry import SurfaceConfiguration, build_grid

TWO_PI = 2.0 * math.pi


def _vec(*comps):
    comps = np.broadcast_arrays(*comps)
    return np.stack(comps, axis=-1)


class Surface:
    name = "surface"

    def default_rect(self):
        raise NotImplementedError

    def default_periodic(self):
        return (False, False)

    def position(self, x1, x2):
        raise NotImplementedError

    def tangents(self, x1, x2):
        """Exact gradient of the position, shape ``(..., 3, 2)``."""
        raise NotImplementedError

    def normal(self, x1, x2):
        raise NotImplementedError

    def normal_gradient(self, x1, x2):
        raise NotImplementedError

    def curvature(self, x1, x2):
        """Exact (H, K, kappa1, kappa2) under the parametrization's own normal."""
        raise NotImplementedError

    def grid(self, nx, ny, rect=None, periodic=None):
        return build_grid(rect or self.default_rect(), nx, ny,
                          self.default_periodic() if periodic is None else periodic)

    def sample(self, grid):
        """Configuration with exact derivative fields at the grid nodes."""
        x1, x2 = grid.coords()
        A = self.tangents(x1, x2)
        n = np.cross(A[..., 0], A[..., 1])
        return SurfaceConfiguration(
            self.position(x1, x2), A, self.normal(x1, x2),
            self.normal_gradient(x1, x2), np.linalg.norm(n, axis=-1), grid,
        )

    def discretize(self, grid):
        """Configuration from sampled positions only (finite differences)."""
        x1, x2 = grid.coords()
        return SurfaceConfiguration.from_positions(self.position(x1, x2), grid)

    def oracle(self, grid):
        x1, x2 = grid.coords()
        H, K, k1, k2 = self.curvature(x1, x2)
        return {"H": H, "K": K, "kappa1": k1, "kappa2": k2}

    def params(self):
        return {}


@dataclass(frozen=True)
class Plate(Surface):
    name = "plate"

    def default_rect(self):
        return ((0.0, 1.0), (0.0, 1.0))

    def position(self, x1, x2):
        return _vec(x1, x2, np.zeros_like(x1))

    def tangents(self, x1, x2):
        z = np.zeros_like(x1)
        o = np.ones_like(x1)
        return np.stack([_vec(o, z, z), _vec(z, o, z)], axis=-1)

    def normal(self, x1, x2):
        z = np.zeros_like(x1)
        return _vec(z, z, np.ones_like(x1))

    def normal_gradient(self, x1, x2):
        return np.zeros(np.shape(x1) + (3, 2))

    def curvature(self, x1, x2):
        z = np.zeros_like(x1)
        return z, z, z, z


@dataclass(frozen=True)
class Cylinder(Surface):
    """psi = (R cos x1, R sin x1, x2); outward normal."""

    R: float = 1.0
    x1_range: tuple = (0.0, TWO_PI)
    x2_range: tuple = (0.0, 1.0)
    name = "cylinder"

    def __post_init__(self):
        if not self.R > 0:
            raise SpecError("cylinder radius must be positive")

    def default_rect(self):
        return (tuple(self.x1_range), tuple(self.x2_range))

    def default_periodic(self):
        full = math.isclose(self.x1_range[1] - self.x1_range[0], TWO_PI, rel_tol=1e-12)
        return (full, False)

    def position(self, x1, x2):
        return _vec(self.R * np.cos(x1), self.R * np.sin(x1), x2 + 0.0 * x1)

    def tangents(self, x1, x2):
        z = np.zeros_like(x1 + x2)
        d1 = _vec(-self.R * np.sin(x1), self.R * np.cos(x1), z)
        d2 = _vec(z, z, 1.0 + z)
        return np.stack([d1, d2], axis=-1)

    def normal(self, x1, x2):
        z = np.zeros_like(x1 + x2)
        return _vec(np.cos(x1) + z, np.sin(x1) + z, z)

    def normal_gradient(self, x1, x2):
        z = np.zeros_like(x1 + x2)
        return np.stack([_vec(-np.sin(x1) + z, np.cos(x1) + z, z), _vec(z, z, z)], axis=-1)

    def curvature(self, x1, x2):
        z = np.zeros_like(x1 + x2)
        return z - 0.5 / self.R, z, z, z - 1.0 / self.R

    def params(self):
        return {"R": self.R, "x1_range": list(self.x1_range), "x2_range": list(self.x2_range)}


@dataclass(frozen=True)
class SphereCap(Surface):
    """x1 = colatitude in ``colatitude``, x2 = longitude (periodic); outward normal."""

    R: float = 1.0
    colatitude: tuple = (math.pi / 6, 5 * math.pi / 6)
    name = "sphere_cap"

    def __post_init__(self):
        if not self.R > 0:
            raise SpecError("sphere radius must be positive")
        t1, t2 = self.colatitude
        if not (0.0 < t1 < t2 < math.pi):
            raise SpecError("colatitude range must satisfy 0 < t1 < t2 < pi (poles excluded)")

    def default_rect(self):
        return (tuple(self.colatitude), (0.0, TWO_PI))

    def default_periodic(self):
        return (False, True)

    def position(self, x1, x2):
        s = np.sin(x1)
        return self.R * _vec(s * np.cos(x2), s * np.sin(x2), np.cos(x1) + 0.0 * x2)

    def tangents(self, x1, x2):
        c, s = np.cos(x1), np.sin(x1)
        d1 = self.R * _vec(c * np.cos(x2), c * np.sin(x2), -s + 0.0 * x2)
        d2 = self.R * _vec(-s * np.sin(x2), s * np.cos(x2), 0.0 * (x1 + x2))
        return np.stack([d1, d2], axis=-1)

    def normal(self, x1, x2):
        return self.position(x1, x2) / self.R

    def normal_gradient(self, x1, x2):
        return self.tangents(x1, x2) / self.R

    def curvature(self, x1, x2):
        z = np.zeros_like(x1 + x2)
        k = z - 1.0 / self.R
        return k, z + 1.0 / self.R ** 2, k, k

    def params(self):
        return {"R": self.R, "colatitude": list(self.colatitude)}


@dataclass(frozen=True)
class Torus(Surface):
    """x1 = toroidal angle, x2 = poloidal angle, both periodic; outward normal."""

    R: float = 2.0
    r: float = 0.5
    name = "torus"

    def __post_init__(self):
        if not (0.0 < self.r < self.R):
            raise SpecError("torus radii must satisfy 0 < r < R")

    def default_rect(self):
        return ((0.0, TWO_PI), (0.0, TWO_PI))

    def default_periodic(self):
        return (True, True)

    def position(self, x1, x2):
        rho = self.R + self.r * np.cos(x2)
        return _vec(rho * np.cos(x1), rho * np.sin(x1), self.r * np.sin(x2) + 0.0 * x1)

    def tangents(self, x1, x2):
        rho = self.R + self.r * np.cos(x2)
        d1 = _vec(-rho * np.sin(x1), rho * np.cos(x1), 0.0 * (x1 + x2))
        d2 = self.r * _vec(-np.sin(x2) * np.cos(x1), -np.sin(x2) * np.sin(x1),
                           np.cos(x2) + 0.0 * x1)
        return np.stack([d1, d2], axis=-1)

    def normal(self, x1, x2):
        cv = np.cos(x2)
        return _vec(cv * np.cos(x1), cv * np.sin(x1), np.sin(x2) + 0.0 * x1)

    def normal_gradient(self, x1, x2):
        cv, sv = np.cos(x2), np.sin(x2)
        d1 = _vec(-cv * np.sin(x1), cv * np.cos(x1), 0.0 * (x1 + x2))
        d2 = _vec(-sv * np.cos(x1), -sv * np.sin(x1), cv + 0.0 * x1)
        return np.stack([d1, d2], axis=-1)

    def curvature(self, x1, x2):
        cv = np.cos(x2) + 0.0 * x1
        k_tor = -cv / (self.R + self.r * cv)
        k_pol = np.full_like(k_tor, -1.0 / self.r)
        return (0.5 * (k_tor + k_pol), k_tor * k_pol,
                np.maximum(k_tor, k_pol), np.minimum(k_tor, k_pol))

    def params(self):
        return {"R": self.R, "r": self.r}


PRESETS = {
    "plate": Plate,
    "cylinder": Cylinder,
    "cylinder-patch": Cylinder,
    "sphere_cap": SphereCap,
    "sphere-cap": SphereCap,
    "torus": Torus,
}


def make_surface(name, **params):
    try:
        cls = PRESETS[name]
    except KeyError:
        raise SpecError(f"unknown surface preset {name!r}; choose from {sorted(PRESETS)}") from None
    for key in ("x1_range", "x2_range", "colatitude"):
        if key in params:
            params[key] = tuple(params[key])
    return cls(**params)
