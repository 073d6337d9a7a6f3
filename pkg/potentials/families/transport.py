"""Optimal transport costs: phi(x, y, s) = s - c(x, y)."""
from typing import Tuple

import numpy as np

from potentials.families.base import ConstraintFamily, sphere_tangent
from potentials.models.catalog import CatalogEntry, CostName, RefractionRegime
from potentials.utils.helpers import lift_to_sphere, sample_ball, unit_vectors


class TransportCostFamily(ConstraintFamily):
    """Linear-in-s family of a transport cost."""

    identifier = "ot-cost"

    def __init__(self, entry: CatalogEntry):
        super().__init__(entry)
        self.cost_name = entry.cost
        self.kappa = entry.kappa
        self.above_one = entry.regime == RefractionRegime.ABOVE_ONE
        self.sphere_source = self.cost_name != CostName.QUADRATIC

    @property
    def target_dimension(self) -> int:
        return self.dimension + 1 if self.sphere_source else self.dimension

    @property
    def theta0(self) -> float:
        return 1.0

    def _argument(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Logarithm argument of the far-field costs."""
        a = np.sum(lift_to_sphere(x) * np.asarray(y, dtype=float), axis=-1)
        if self.cost_name == CostName.LOG_REFLECTOR:
            return 1.0 - a
        if self.above_one:
            return self.kappa * a - 1.0
        return 1.0 - self.kappa * a

    def cost(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.cost_name == CostName.QUADRATIC:
            return 0.5 * np.sum((x - y) ** 2, axis=-1)
        argument = self._argument(x, y)
        if self.cost_name == CostName.LOG_REFRACTOR and self.above_one:
            return np.log(argument)
        return -np.log(argument)

    def phi(self, x: np.ndarray, y: np.ndarray, s: np.ndarray) -> np.ndarray:
        return np.asarray(s, dtype=float) - self.cost(x, y)

    def phi_s(self, x: np.ndarray, y: np.ndarray, s: np.ndarray) -> np.ndarray:
        shape = np.broadcast_shapes(np.shape(x)[:-1], np.shape(y)[:-1], np.shape(s))
        return np.ones(shape)

    def phi_xs(self, x: np.ndarray, y: np.ndarray, s: np.ndarray) -> np.ndarray:
        shape = np.broadcast_shapes(np.shape(x)[:-1], np.shape(y)[:-1], np.shape(s))
        return np.zeros(shape + (self.dimension,))

    def phi_x(self, x: np.ndarray, y: np.ndarray, s: np.ndarray) -> np.ndarray:
        if self.cost_name != CostName.QUADRATIC:
            return super().phi_x(x, y, s)
        d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        return np.broadcast_to(-d, np.broadcast_shapes(d.shape, np.shape(s) + (self.dimension,))).copy()

    def phi_y(self, x: np.ndarray, y: np.ndarray, s: np.ndarray) -> np.ndarray:
        if self.cost_name != CostName.QUADRATIC:
            return super().phi_y(x, y, s)
        return -self.phi_x(x, y, s)

    def phi_xx(self, x: np.ndarray, y: np.ndarray, s: np.ndarray) -> np.ndarray:
        if self.cost_name != CostName.QUADRATIC:
            return super().phi_xx(x, y, s)
        shape = np.broadcast_shapes(np.shape(x)[:-1], np.shape(y)[:-1], np.shape(s))
        return np.broadcast_to(-np.eye(self.dimension), shape + (self.dimension, self.dimension)).copy()

    def phi_xy(self, x: np.ndarray, y: np.ndarray, s: np.ndarray) -> np.ndarray:
        if self.cost_name != CostName.QUADRATIC:
            return super().phi_xy(x, y, s)
        return -self.phi_xx(x, y, s)

    def s_hint(self, x: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        with np.errstate(all="ignore"):
            c = self.cost(x, y)
        c = np.where(np.isfinite(c), c, 0.0)
        return c - 1.0, c + 1.0

    def geometry_valid(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        if self.cost_name == CostName.QUADRATIC:
            return super().geometry_valid(x, y)
        inside = np.sum(np.asarray(x, dtype=float) ** 2, axis=-1) < 1.0
        with np.errstate(all="ignore"):
            return inside & (self._argument(x, y) > 0.0)

    def embed_target(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        if not self.sphere_source:
            return points
        height = -1.0 if self.cost_name == CostName.LOG_REFLECTOR else 1.0
        column = np.full(points.shape[:-1] + (1,), height)
        return unit_vectors(np.concatenate([points, column], axis=-1))

    def target_tangent(self, y: np.ndarray) -> np.ndarray:
        if not self.sphere_source:
            return super().target_tangent(y)
        return sphere_tangent(y, self.dimension)

    def _draw(self, rng: np.random.Generator, size: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        n = self.dimension
        s = rng.uniform(-1.0, 1.0, size)
        if not self.sphere_source:
            return rng.random((size, n)), rng.random((size, n)), s
        x = sample_ball(rng, size, n, self.entry.r0)
        y = unit_vectors(rng.standard_normal((size, n + 1)))
        y[:, -1] = np.abs(y[:, -1])
        return x, y, s

    def _sample_margin(self, x: np.ndarray, y: np.ndarray, s: np.ndarray) -> np.ndarray:
        if not self.sphere_source:
            return super()._sample_margin(x, y, s)
        return self._argument(x, y) >= self.entry.delta0
