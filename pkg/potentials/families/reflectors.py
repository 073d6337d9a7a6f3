"""Near-field reflector families."""
from typing import Tuple

import numpy as np

from potentials.families.base import ConstraintFamily
from potentials.models.catalog import CatalogEntry
from potentials.utils.helpers import lift_to_sphere, sample_ball


class ParallelReflectorFamily(ConstraintFamily):
    """Vertical parallel beam reflected by supporting paraboloids.

    phi(x, y, s) = -1/(2s) + (s/2)|x - y|^2, target plane z = 0.
    """

    identifier = "reflector-nf-parallel"
    tracer = "parallel-reflector"
    plane_height = 0.0

    @property
    def theta0(self) -> float:
        return 1.0 / (2.0 * self.entry.s_max ** 2)

    @staticmethod
    def _parts(x, y, s):
        d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        s = np.asarray(s, dtype=float)
        return d, s, np.sum(d * d, axis=-1)

    def phi(self, x, y, s):
        d, s, r2 = self._parts(x, y, s)
        return -0.5 / s + 0.5 * s * r2

    def phi_s(self, x, y, s):
        d, s, r2 = self._parts(x, y, s)
        return 0.5 / s ** 2 + 0.5 * r2

    def phi_x(self, x, y, s):
        d, s, _ = self._parts(x, y, s)
        return s[..., None] * d

    def phi_y(self, x, y, s):
        return -self.phi_x(x, y, s)

    def phi_xx(self, x, y, s):
        d, s, _ = self._parts(x, y, s)
        shape = np.broadcast_shapes(d.shape[:-1], s.shape)
        return np.broadcast_to(s, shape)[..., None, None] * np.eye(self.dimension)

    def phi_xy(self, x, y, s):
        return -self.phi_xx(x, y, s)

    def phi_xs(self, x, y, s):
        d, s, _ = self._parts(x, y, s)
        return np.broadcast_to(d, np.broadcast_shapes(d.shape, s.shape + (self.dimension,))).copy()

    def s_bounds(self, x, y):
        lo, hi = super().s_bounds(x, y)
        return np.zeros_like(lo), hi

    def s_hint(self, x, y):
        lo, hi = super().s_bounds(x, y)
        return np.full_like(lo, 0.5), np.full_like(hi, 2.0)

    def surface(self, x, y, s):
        """Paraboloid with focus (y, 0) and focal length 1/(2s)."""
        d, s, r2 = self._parts(x, y, s)
        focal = 1.0 / (2.0 * s)
        return focal - r2 / (4.0 * focal)

    def _draw(self, rng, size):
        n = self.dimension
        radius = 0.9 * self.entry.r0
        x = sample_ball(rng, size, n, radius)
        y = sample_ball(rng, size, n, radius)
        s = rng.uniform(0.5, self.entry.s_max, size)
        return x, y, s

    def _sample_margin(self, x, y, s):
        return s * np.linalg.norm(x - y, axis=-1) <= 0.95


class PointReflectorFamily(ConstraintFamily):
    """Point source at the origin reflected by supporting ellipsoids.

    X = (x, omega(x)) on the upper unit sphere, p = exp(-s) is the focal
    parameter and phi = s + log(1 - <X, Y> / (p + sqrt(|Y|^2 + p^2))).
    """

    identifier = "reflector-nf-point"
    sphere_source = True
    tracer = "point-reflector"

    def __init__(self, entry: CatalogEntry):
        super().__init__(entry)
        self.plane_height = -entry.h

    @property
    def target_dimension(self) -> int:
        return self.dimension + 1

    @property
    def theta0(self) -> float:
        return self.entry.delta0

    @staticmethod
    def _parts(x, y, s):
        X = lift_to_sphere(x)
        Y = np.asarray(y, dtype=float)
        s = np.asarray(s, dtype=float)
        p = np.exp(-s)
        norm = np.linalg.norm(Y, axis=-1)
        root = np.hypot(norm, p)
        a = np.sum(X * Y, axis=-1)
        return X, Y, p, root, p + root, a

    def phi(self, x, y, s):
        X, Y, p, root, denom, a = self._parts(x, y, s)
        return np.asarray(s, dtype=float) + np.log1p(-a / denom)

    def phi_s(self, x, y, s):
        X, Y, p, root, denom, a = self._parts(x, y, s)
        return 1.0 - a * p / (root * (denom - a))

    def phi_x(self, x, y, s):
        X, Y, p, root, denom, a = self._parts(x, y, s)
        x = np.asarray(x, dtype=float)
        da = Y[..., :-1] - Y[..., -1:] * x / X[..., -1:]
        return -da / (denom - a)[..., None]

    def phi_y(self, x, y, s):
        X, Y, p, root, denom, a = self._parts(x, y, s)
        numerator = -X + (a / (root * denom))[..., None] * Y
        return numerator / (denom - a)[..., None]

    def geometry_valid(self, x, y):
        x = np.asarray(x, dtype=float)
        Y = np.asarray(y, dtype=float)
        norm = np.linalg.norm(Y, axis=-1)
        cosine = np.sum(lift_to_sphere(x) * Y, axis=-1) / norm
        inside = np.sum(x * x, axis=-1) < 1.0
        return inside & (norm > 0.0) & (cosine >= -1.0) & (cosine <= 1.0 - self.entry.delta0)

    def s_hint(self, x, y):
        center = -np.log(np.linalg.norm(np.asarray(y, dtype=float), axis=-1))
        center = np.broadcast_to(center, np.broadcast_shapes(np.shape(x)[:-1], center.shape))
        return center - 1.0, center + 1.0

    def embed_target(self, points):
        points = np.asarray(points, dtype=float)
        column = np.full(points.shape[:-1] + (1,), self.plane_height)
        return np.concatenate([points, column], axis=-1)

    def surface(self, x, y, s):
        """Radial function p / (1 - eps <X, Y/|Y|>) of the ellipsoid with foci O and Y."""
        X = lift_to_sphere(x)
        Y = np.asarray(y, dtype=float)
        p = np.exp(-np.asarray(s, dtype=float))
        norm = np.linalg.norm(Y, axis=-1)
        eps = np.sqrt(1.0 + p ** 2 / norm ** 2) - p / norm
        return p / (1.0 - eps * np.sum(X * Y, axis=-1) / norm)

    def _draw(self, rng, size):
        n = self.dimension
        x = sample_ball(rng, size, n, self.entry.r0)
        lateral = rng.uniform(-1.0, 1.0, (size, n))
        height = rng.uniform(-2.0 * self.entry.h, 2.0 * self.entry.h, (size, 1))
        y = np.concatenate([lateral, height], axis=1)
        s = -np.log(np.linalg.norm(y, axis=1)) + rng.uniform(-1.0, 1.0, size)
        return x, y, s

    def _sample_margin(self, x, y, s):
        return np.linalg.norm(y, axis=-1) >= 0.2
