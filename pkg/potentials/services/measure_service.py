"""Grid, quadrature and measure service."""
import logging
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

import numpy as np

from potentials.models.geometry import (
    AtomicMeasure,
    BalanceResult,
    ChartKind,
    DensityKind,
    DensitySpec,
    SourceChart,
    SourceGrid,
)
from potentials.utils.errors import ConfigValidationError

logger = logging.getLogger(__name__)


def _linear_density(x: np.ndarray, params: Dict[str, Any]) -> np.ndarray:
    offset = float(params.get("offset", 0.0))
    slope = float(params.get("slope", 1.0))
    return offset + slope * x[:, 0]


def _gaussian_density(x: np.ndarray, params: Dict[str, Any]) -> np.ndarray:
    amplitude = float(params.get("amplitude", 1.0))
    width = float(params.get("width", 1.0))
    center = np.asarray(params.get("center", np.zeros(x.shape[1])), dtype=float)
    return amplitude * np.exp(-np.sum((x - center) ** 2, axis=1) / width ** 2)


# Named densities accepted by {"kind": "expr", "name": ...}
DENSITY_CATALOG: Dict[str, Callable[[np.ndarray, Dict[str, Any]], np.ndarray]] = {
    "linear": _linear_density,
    "gaussian": _gaussian_density,
}


class MeasureService:
    """Service for grids, densities and mass bookkeeping."""

    def build_grid(
        self,
        chart: SourceChart,
        resolution: int,
        density: Optional[DensitySpec] = None
    ) -> SourceGrid:
        """Midpoint-rule lattice over the chart, restricted by the chart's inclusion predicate."""
        if resolution < 2:
            raise ConfigValidationError(f"resolution must be at least 2, got {resolution}")
        density = density or DensitySpec()

        lo, hi = chart.bounding_box()
        extent = hi - lo
        counts = np.maximum(1, np.rint(extent * resolution).astype(int))
        spacing = extent / counts
        axes = [lo[k] + (np.arange(counts[k]) + 0.5) * spacing[k] for k in range(chart.dimension)]
        mesh = np.meshgrid(*axes, indexing="ij")
        points = np.stack([m.ravel() for m in mesh], axis=1)
        index = np.indices(tuple(counts)).reshape(chart.dimension, -1).T

        keep = chart.contains(points)
        points = points[keep]
        index = index[keep]
        weights = np.full(points.shape[0], float(np.prod(spacing)))
        if chart.kind == ChartKind.SPHERE_CAP:
            weights = weights / np.sqrt(1.0 - np.sum(points ** 2, axis=1))

        values = self.evaluate_density(density, points)
        lookup = np.full(tuple(counts), -1, dtype=int)
        lookup[tuple(index.T)] = np.arange(points.shape[0])

        grid = SourceGrid(
            chart=chart,
            nodes=points,
            weights=weights,
            density=values,
            index=index,
            spacing=spacing,
            shape=tuple(int(c) for c in counts),
            lookup=lookup
        )
        logger.info(f"Built {chart.kind.value} grid with {grid.size} nodes (resolution {resolution})")
        return grid

    def evaluate_density(self, spec: DensitySpec, x: np.ndarray) -> np.ndarray:
        """Evaluate a density spec at chart points."""
        if spec.kind == DensityKind.UNIFORM:
            values = np.ones(x.shape[0])
        else:
            if spec.name not in DENSITY_CATALOG:
                raise ConfigValidationError(f"unknown density identifier: {spec.name}")
            values = np.asarray(DENSITY_CATALOG[spec.name](x, spec.params), dtype=float)
        if np.any(values < 0):
            raise ConfigValidationError("density values must be nonnegative")
        if not np.any(values > 0):
            raise ConfigValidationError("density vanishes on every node")
        return values

    def build_measure(self, atoms: Any, weights: Any) -> AtomicMeasure:
        """Validate and wrap target atoms."""
        return AtomicMeasure(atoms=np.asarray(atoms, dtype=float), weights=np.asarray(weights, dtype=float))

    def total_mass(self, obj: Union[SourceGrid, AtomicMeasure]) -> float:
        """Sum of w_i f_i for grids, sum of g_j for atomic measures."""
        return float(obj.mass)

    def balance_check(self, grid: SourceGrid, measure: AtomicMeasure, tol: float) -> BalanceResult:
        """Mass-balance test |mass(f) - mass(g)| <= tol * mass(f)."""
        if tol <= 0:
            raise ConfigValidationError("balance tolerance must be positive")
        source = self.total_mass(grid)
        if source <= 0:
            raise ConfigValidationError("source mass is zero")
        target = self.total_mass(measure)
        deficit = source - target
        return BalanceResult(
            balanced=bool(abs(deficit) <= tol * source),
            deficit=deficit,
            source_mass=source,
            target_mass=target
        )

    def lattice_gradient(self, grid: SourceGrid, values: np.ndarray) -> np.ndarray:
        """Central-difference gradient on the lattice; NaN where a neighbour is missing.

        The derivative index is the last axis of the result.
        """
        values = np.asarray(values, dtype=float)
        padded = np.concatenate([values, np.full((1,) + values.shape[1:], np.nan)], axis=0)
        columns = []
        for k in range(grid.dimension):
            e = np.zeros(grid.dimension, dtype=int)
            e[k] = 1
            plus = grid.neighbor(tuple(e))
            minus = grid.neighbor(tuple(-e))
            columns.append((padded[plus] - padded[minus]) / (2.0 * grid.spacing[k]))
        return np.stack(columns, axis=-1)

    def lattice_hessian(self, grid: SourceGrid, values: np.ndarray) -> np.ndarray:
        """Second differences on the lattice, mixed terms from the diagonal stencil."""
        values = np.asarray(values, dtype=float)
        padded = np.append(values, np.nan)
        n = grid.dimension
        h = grid.spacing
        hessian = np.full((grid.size, n, n), np.nan)
        for a in range(n):
            e = np.zeros(n, dtype=int)
            e[a] = 1
            plus = padded[grid.neighbor(tuple(e))]
            minus = padded[grid.neighbor(tuple(-e))]
            hessian[:, a, a] = (plus - 2.0 * values + minus) / h[a] ** 2
            for b in range(a + 1, n):
                f = np.zeros(n, dtype=int)
                f[b] = 1
                pp = padded[grid.neighbor(tuple(e + f))]
                pm = padded[grid.neighbor(tuple(e - f))]
                mp = padded[grid.neighbor(tuple(-e + f))]
                mm = padded[grid.neighbor(tuple(-e - f))]
                mixed = (pp - pm - mp + mm) / (4.0 * h[a] * h[b])
                hessian[:, a, b] = mixed
                hessian[:, b, a] = mixed
        return hessian

    def neighbor_pairs(self, grid: SourceGrid) -> Tuple[np.ndarray, np.ndarray]:
        """All axis-adjacent node pairs (i, k)."""
        rows: List[np.ndarray] = []
        cols: List[np.ndarray] = []
        for k in range(grid.dimension):
            e = np.zeros(grid.dimension, dtype=int)
            e[k] = 1
            plus = grid.neighbor(tuple(e))
            present = plus >= 0
            rows.append(np.nonzero(present)[0])
            cols.append(plus[present])
        return np.concatenate(rows), np.concatenate(cols)
