"""Near-field refractor families."""
from typing import Tuple

import numpy as np

from potentials.families.base import ConstraintFamily
from potentials.models.catalog import CatalogEntry, RefractionRegime
from potentials.utils.helpers import lift_to_sphere, sample_ball


class PointRefractorFamily(ConstraintFamily):
    """Point source at the origin refracted by Cartesian ovals into plane targets.

    kappa = n_out / n_in. The oval through Y with optical-path constant p has
    radial function rho(X) and phi = -log rho. For kappa < 1, p = exp(-s);
    for kappa > 1, p = exp(s), which keeps phi increasing in s.
    """

    identifier = "refractor-nf-point"
    sphere_source = True
    tracer = "point-refractor"

    def __init__(self, entry: CatalogEntry):
        super().__init__(entry)
        self.kappa = entry.kappa
        self.above_one = entry.regime == RefractionRegime.ABOVE_ONE
        self.exit_ratio = entry.kappa
        self.plane_height = entry.h

    @property
    def target_dimension(self) -> int:
        return self.dimension + 1

    @property
    def theta0(self) -> float:
        return 1.0 / abs(1.0 - self.kappa ** 2)

    def _path(self, s):
        s = np.asarray(s, dtype=float)
        return np.exp(s) if self.above_one else np.exp(-s)

    def _parts(self, x, y, s):
        """p, rho and the partials of rho in p, t = X.Y and r2 = |Y|^2."""
        k2 = self.kappa ** 2
        Y = np.asarray(y, dtype=float)
        t = np.sum(lift_to_sphere(x) * Y, axis=-1)
        r2 = np.sum(Y * Y, axis=-1)
        p = self._path(s)
        root = np.sqrt(k2 * ((p - t) ** 2 + (1.0 - k2) * (r2 - t ** 2)))
        if self.above_one:
            rho = ((k2 * t - p) - root) / (k2 - 1.0)
            rho_p = -(1.0 + k2 * (p - t) / root) / (k2 - 1.0)
            rho_t = k2 * (1.0 + (p - k2 * t) / root) / (k2 - 1.0)
            rho_r2 = k2 / (2.0 * root)
        else:
            rho = (p - k2 * t - root) / (1.0 - k2)
            rho_p = (1.0 + k2 * (t - p) / root) / (1.0 - k2)
            rho_t = k2 * ((p - k2 * t) / root - 1.0) / (1.0 - k2)
            rho_r2 = -k2 / (2.0 * root)
        return p, rho, rho_p, rho_t, rho_r2

    def phi(self, x, y, s):
        _, rho, _, _, _ = self._parts(x, y, s)
        return -np.log(rho)

    def phi_s(self, x, y, s):
        p, rho, rho_p, _, _ = self._parts(x, y, s)
        sign = -1.0 if self.above_one else 1.0
        return sign * p * rho_p / rho

    def phi_x(self, x, y, s):
        x = np.asarray(x, dtype=float)
        Y = np.asarray(y, dtype=float)
        _, rho, _, rho_t, _ = self._parts(x, Y, s)
        height = lift_to_sphere(x)[..., -1:]
        t_x = Y[..., :-1] - Y[..., -1:] * x / height
        return -(rho_t / rho)[..., None] * t_x

    def phi_y(self, x, y, s):
        Y = np.asarray(y, dtype=float)
        _, rho, _, rho_t, rho_r2 = self._parts(x, Y, s)
        return -(rho_t[..., None] * lift_to_sphere(x) + 2.0 * rho_r2[..., None] * Y) / rho[..., None]

    def _path_bounds(self, x, y):
        Y = np.asarray(y, dtype=float)
        t = np.sum(lift_to_sphere(x) * Y, axis=-1)
        norm = np.linalg.norm(Y, axis=-1)
        if self.above_one:
            k2 = self.kappa ** 2
            w = np.sqrt(np.maximum((k2 - 1.0) * (norm ** 2 - t ** 2), 0.0))
            return np.maximum(norm, t + w), np.minimum(self.kappa * norm, k2 * t)
        return self.kappa * norm, np.minimum(norm, t)

    def s_bounds(self, x, y):
        with np.errstate(all="ignore"):
            p_lo, p_hi = self._path_bounds(x, y)
            if self.above_one:
                return np.log(p_lo), np.log(p_hi)
            return -np.log(p_hi), -np.log(p_lo)

    def s_hint(self, x, y):
        lo, hi = self.s_bounds(x, y)
        width = hi - lo
        return lo + 0.05 * width, hi - 0.05 * width

    def geometry_valid(self, x, y):
        x = np.asarray(x, dtype=float)
        Y = np.asarray(y, dtype=float)
        norm = np.linalg.norm(Y, axis=-1)
        cosine = np.sum(lift_to_sphere(x) * Y, axis=-1) / norm
        inside = np.sum(x * x, axis=-1) < 1.0
        tau = self.entry.tau
        if self.above_one:
            return inside & (norm > 0.0) & (cosine >= 1.0 / self.kappa + tau)
        return inside & (norm > 0.0) & (cosine >= self.kappa + tau)

    def embed_target(self, points):
        points = np.asarray(points, dtype=float)
        column = np.full(points.shape[:-1] + (1,), self.plane_height)
        return np.concatenate([points, column], axis=-1)

    def surface(self, x, y, s):
        """Oval radius from the quadratic |rho X| + kappa |Y - rho X| = p."""
        k2 = self.kappa ** 2
        Y = np.asarray(y, dtype=float)
        t = np.sum(lift_to_sphere(x) * Y, axis=-1)
        r2 = np.sum(Y * Y, axis=-1)
        p = self._path(s)
        if self.above_one:
            disc = (k2 * t - p) ** 2 - (k2 - 1.0) * (k2 * r2 - p ** 2)
            return ((k2 * t - p) - np.sqrt(disc)) / (k2 - 1.0)
        disc = (p - k2 * t) ** 2 - (1.0 - k2) * (p ** 2 - k2 * r2)
        return ((p - k2 * t) - np.sqrt(disc)) / (1.0 - k2)

    def _draw(self, rng, size):
        n = self.dimension
        x = sample_ball(rng, size, n, 0.3)
        lateral = sample_ball(rng, size, n, 0.3)
        y = np.concatenate([lateral, np.full((size, 1), self.entry.h)], axis=1)
        with np.errstate(all="ignore"):
            lo, hi = self.s_hint(x, y)
        s = lo + rng.random(size) * (hi - lo)
        return x, y, s


class ParallelRefractorFamily(ConstraintFamily):
    """Vertical parallel beam refracted by inverse ellipsoids toward (y, h).

    kappa = n_in / n_out < 1, a = 1 - kappa^2 and
    phi = kappa s / a + sqrt(s^2 / a^2 - |x - y|^2 / a) - h.
    """

    identifier = "refractor-nf-parallel"
    tracer = "parallel-refractor"

    def __init__(self, entry: CatalogEntry):
        super().__init__(entry)
        self.kappa = entry.kappa
        self.a = 1.0 - entry.kappa ** 2
        self.exit_ratio = 1.0 / entry.kappa
        self.plane_height = entry.h

    @property
    def theta0(self) -> float:
        return 1.0 / (1.0 - self.kappa)

    def _parts(self, x, y, s):
        d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        s = np.asarray(s, dtype=float)
        q = np.sqrt(s ** 2 / self.a ** 2 - np.sum(d * d, axis=-1) / self.a)
        return d, s, q

    def phi(self, x, y, s):
        d, s, q = self._parts(x, y, s)
        return self.kappa * s / self.a + q - self.entry.h

    def phi_s(self, x, y, s):
        d, s, q = self._parts(x, y, s)
        return self.kappa / self.a + s / (self.a ** 2 * q)

    def phi_x(self, x, y, s):
        d, s, q = self._parts(x, y, s)
        return -d / (self.a * q)[..., None]

    def phi_y(self, x, y, s):
        return -self.phi_x(x, y, s)

    def phi_xx(self, x, y, s):
        d, s, q = self._parts(x, y, s)
        eye = np.eye(self.dimension)
        outer = d[..., :, None] * d[..., None, :]
        return -eye / (self.a * q)[..., None, None] - outer / (self.a ** 2 * q ** 3)[..., None, None]

    def phi_xy(self, x, y, s):
        return -self.phi_xx(x, y, s)

    def phi_xs(self, x, y, s):
        d, s, q = self._parts(x, y, s)
        return d * (s / (self.a ** 3 * q ** 3))[..., None]

    def s_bounds(self, x, y):
        lo, hi = super().s_bounds(x, y)
        d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        return np.broadcast_to(np.sqrt(self.a) * np.linalg.norm(d, axis=-1), lo.shape).copy(), hi

    def s_hint(self, x, y):
        lo, _ = self.s_bounds(x, y)
        h, a, k = self.entry.h, self.a, self.kappa
        hint_lo = np.maximum(h * a / k, lo * 1.001)
        hint_hi = np.maximum(h * a * (1.0 + k) ** 2 / k ** 3, 2.0 * hint_lo)
        return hint_lo, hint_hi

    def geometry_valid(self, x, y):
        d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        radius = self.entry.delta * self.entry.h * np.sqrt(self.a) / self.kappa
        return np.linalg.norm(d, axis=-1) <= radius

    def embed_target(self, points):
        return np.asarray(points, dtype=float)

    def surface(self, x, y, s):
        """Height of the lens surface whose optical path to (y, h) is constant.

        Depth zeta = h - z solves a zeta^2 - 2 kappa s zeta + |x - y|^2 - s^2 = 0.
        """
        d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        s = np.asarray(s, dtype=float)
        r2 = np.sum(d * d, axis=-1)
        zeta = (self.kappa * s + np.sqrt(s ** 2 - self.a * r2)) / self.a
        return self.entry.h - zeta

    def _draw(self, rng, size):
        n = self.dimension
        x = sample_ball(rng, size, n, self.entry.r0)
        y = sample_ball(rng, size, n, self.entry.r0)
        lo, hi = self.s_hint(x, y)
        s = lo + rng.random(size) * (hi - lo)
        return x, y, s

    def _sample_margin(self, x, y, s):
        return s >= 1.2 * np.sqrt(self.a) * np.linalg.norm(x - y, axis=-1)
