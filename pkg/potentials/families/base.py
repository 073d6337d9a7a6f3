"""Abstract constraint family phi(x, y, s)."""
import logging
from abc import ABC, abstractmethod
from typing import Optional, Tuple

import numpy as np
from scipy.linalg import null_space

from potentials.config.settings import settings
from potentials.models.catalog import CatalogEntry
from potentials.utils.errors import SamplingError
from potentials.utils.helpers import richardson_derivative, richardson_gradient

logger = logging.getLogger(__name__)


class ConstraintFamily(ABC):
    """Evaluator bundle for the constraint u + phi(x, y, s) <= 0.

    All evaluators broadcast over leading axes: x has shape (..., n), y has
    shape (..., m) and s has shape (...). Gradients append their derivative
    index as the last axis; phi_xy has shape (..., n, m).
    """

    identifier: str = ""
    sphere_source: bool = False
    tracer: Optional[str] = None
    exit_ratio: Optional[float] = None
    plane_height: Optional[float] = None

    def __init__(self, entry: CatalogEntry):
        self.entry = entry
        self.dimension = entry.dimension
        self.step = settings.internal_step

    @property
    def target_dimension(self) -> int:
        return self.dimension

    @property
    @abstractmethod
    def theta0(self) -> float:
        """Declared lower bound of phi_s on the sampling region."""

    @abstractmethod
    def phi(self, x: np.ndarray, y: np.ndarray, s: np.ndarray) -> np.ndarray:
        """Constraint function."""

    def phi_s(self, x: np.ndarray, y: np.ndarray, s: np.ndarray) -> np.ndarray:
        return richardson_derivative(lambda v: self.phi(x, y, v), s, self.step)

    def phi_x(self, x: np.ndarray, y: np.ndarray, s: np.ndarray) -> np.ndarray:
        return richardson_gradient(lambda p: self.phi(p, y, s), x, self.step)

    def phi_y(self, x: np.ndarray, y: np.ndarray, s: np.ndarray) -> np.ndarray:
        return richardson_gradient(lambda q: self.phi(x, q, s), y, self.step)

    def phi_xx(self, x: np.ndarray, y: np.ndarray, s: np.ndarray) -> np.ndarray:
        return richardson_gradient(lambda p: self.phi_x(p, y, s), x, self.step)

    def phi_xy(self, x: np.ndarray, y: np.ndarray, s: np.ndarray) -> np.ndarray:
        return richardson_gradient(lambda q: self.phi_x(x, q, s), y, self.step)

    def phi_xs(self, x: np.ndarray, y: np.ndarray, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return richardson_derivative(lambda v: self.phi_x(x, y, v), s, self.step)

    def s_bounds(self, x: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Open interval of admissible s for each (x, y)."""
        shape = np.broadcast_shapes(np.shape(x)[:-1], np.shape(y)[:-1])
        return np.full(shape, -np.inf), np.full(shape, np.inf)

    @abstractmethod
    def s_hint(self, x: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Finite starting bracket for the root solve in s."""

    def geometry_valid(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Family-specific inequalities on (x, y)."""
        shape = np.broadcast_shapes(np.shape(x)[:-1], np.shape(y)[:-1])
        return np.ones(shape, dtype=bool)

    def valid(self, x: np.ndarray, y: np.ndarray, s: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        s = np.asarray(s, dtype=float)
        lo, hi = self.s_bounds(x, y)
        with np.errstate(all="ignore"):
            geometry = self.geometry_valid(x, y)
            value = self.phi(x, y, s)
        return (s > lo) & (s < hi) & geometry & np.isfinite(value)

    def embed_target(self, points: np.ndarray) -> np.ndarray:
        """Map planar generator positions to target points of this family."""
        return np.asarray(points, dtype=float)

    def target_tangent(self, y: np.ndarray) -> np.ndarray:
        """Orthonormal tangent basis of the target at y, shape (..., m, n)."""
        y = np.asarray(y, dtype=float)
        basis = np.eye(self.target_dimension)[:, :self.dimension]
        return np.broadcast_to(basis, y.shape[:-1] + basis.shape)

    def surface(self, x: np.ndarray, y: np.ndarray, s: np.ndarray) -> np.ndarray:
        """Supporting surface of a single branch, from its geometric definition."""
        raise NotImplementedError(f"{self.identifier} has no optical supporting surface")

    @abstractmethod
    def _draw(self, rng: np.random.Generator, size: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Candidate (x, y, s) triples for rejection sampling."""

    def _sample_margin(self, x: np.ndarray, y: np.ndarray, s: np.ndarray) -> np.ndarray:
        return np.ones(x.shape[0], dtype=bool)

    def sample(self, rng: np.random.Generator, count: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Valid samples from the family's sampling region."""
        xs, ys, ss = [], [], []
        found = 0
        draws = 0
        batch = max(64, 2 * count)
        while found < count and draws < settings.max_rejection_draws:
            x, y, s = self._draw(rng, batch)
            draws += batch
            with np.errstate(all="ignore"):
                keep = self.valid(x, y, s) & self._sample_margin(x, y, s)
            xs.append(x[keep])
            ys.append(y[keep])
            ss.append(s[keep])
            found += int(np.sum(keep))
        if found < count:
            raise SamplingError(
                f"{self.identifier}: found {found} valid samples of {count} after {draws} draws"
            )
        logger.debug(f"{self.identifier}: accepted {found} of {draws} candidate samples")
        return np.concatenate(xs)[:count], np.concatenate(ys)[:count], np.concatenate(ss)[:count]


def sphere_tangent(y: np.ndarray, dimension: int) -> np.ndarray:
    """Orthonormal tangent bases of the unit sphere at the rows of y."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    flat = y.reshape(-1, y.shape[-1])
    bases = np.stack([null_space(row[None, :])[:, :dimension] for row in flat])
    return bases.reshape(y.shape[:-1] + bases.shape[1:])
