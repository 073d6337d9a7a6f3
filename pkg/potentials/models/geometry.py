"""Source charts, grids and target measures."""
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, model_validator
from scipy.spatial.distance import pdist

from potentials.utils.errors import ConfigValidationError
from potentials.utils.helpers import lift_to_sphere


class ChartKind(str, Enum):
    """Source chart types."""
    BOX = "box"
    DISK = "disk"
    SPHERE_CAP = "sphere-cap"


class SourceChart(BaseModel):
    """Chart-coordinate description of the source domain U."""
    kind: ChartKind = ChartKind.BOX
    dimension: int = 2
    lower: Optional[List[float]] = None
    upper: Optional[List[float]] = None
    center: Optional[List[float]] = None
    radius: Optional[float] = None  # disk radius, or r_chart for a sphere cap

    @model_validator(mode="after")
    def _check_geometry(self) -> "SourceChart":
        if self.dimension not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.dimension}")
        for name in ("lower", "upper", "center"):
            value = getattr(self, name)
            if value is not None and len(value) != self.dimension:
                raise ValueError(f"{name} must have {self.dimension} entries")
        if self.kind == ChartKind.BOX:
            lo, hi = self.box_bounds()
            if np.any(hi <= lo):
                raise ValueError("box upper bounds must exceed lower bounds")
        elif self.kind == ChartKind.DISK:
            if self.radius is None or self.radius <= 0:
                raise ValueError("disk radius must be positive")
        else:
            if self.radius is None or not (0.0 < self.radius < 1.0):
                raise ValueError("sphere-cap chart radius must lie in (0, 1)")
            if self.center is not None and np.any(np.asarray(self.center) != 0.0):
                raise ValueError("sphere-cap charts are centered at the pole")
        return self

    def box_bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        lo = np.zeros(self.dimension) if self.lower is None else np.asarray(self.lower, dtype=float)
        hi = np.ones(self.dimension) if self.upper is None else np.asarray(self.upper, dtype=float)
        return lo, hi

    def center_point(self) -> np.ndarray:
        if self.center is None:
            return np.zeros(self.dimension)
        return np.asarray(self.center, dtype=float)

    def bounding_box(self) -> Tuple[np.ndarray, np.ndarray]:
        """Axis-aligned box containing the chart."""
        if self.kind == ChartKind.BOX:
            return self.box_bounds()
        c = self.center_point()
        return c - self.radius, c + self.radius

    def contains(self, x: np.ndarray) -> np.ndarray:
        """Inclusion predicate for chart coordinates."""
        x = np.asarray(x, dtype=float)
        if self.kind == ChartKind.BOX:
            lo, hi = self.box_bounds()
            return np.all((x >= lo) & (x <= hi), axis=-1)
        return np.linalg.norm(x - self.center_point(), axis=-1) <= self.radius

    def analytic_measure(self) -> float:
        """Exact measure of the chart (surface measure dx / omega(x) for caps)."""
        r = self.radius
        if self.kind == ChartKind.BOX:
            lo, hi = self.box_bounds()
            return float(np.prod(hi - lo))
        if self.kind == ChartKind.DISK:
            return math.pi * r * r if self.dimension == 2 else 2.0 * r
        if self.dimension == 2:
            return 2.0 * math.pi * (1.0 - math.sqrt(1.0 - r * r))
        return 2.0 * math.asin(r)

    def lift(self, x: np.ndarray) -> np.ndarray:
        """Lift chart coordinates to (x, omega(x)); only meaningful for caps."""
        return lift_to_sphere(x)


class DensityKind(str, Enum):
    """Density specification kinds."""
    UNIFORM = "uniform"
    EXPR = "expr"


class DensitySpec(BaseModel):
    """Density grammar: {"kind":"uniform"} or {"kind":"expr","name":...,"params":{...}}."""
    kind: DensityKind = DensityKind.UNIFORM
    name: Optional[str] = None
    params: Dict[str, Any] = Field(default_factory=dict)


class BalanceResult(BaseModel):
    """Outcome of the mass-balance check."""
    balanced: bool
    deficit: float
    source_mass: float
    target_mass: float


@dataclass(frozen=True)
class SourceGrid:
    """Quadrature-ready lattice discretization of the source chart."""
    chart: SourceChart
    nodes: np.ndarray
    weights: np.ndarray
    density: np.ndarray
    index: np.ndarray
    spacing: np.ndarray
    shape: Tuple[int, ...]
    lookup: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return int(self.nodes.shape[0])

    @property
    def dimension(self) -> int:
        return int(self.nodes.shape[1])

    @property
    def node_mass(self) -> np.ndarray:
        return self.weights * self.density

    @property
    def mass(self) -> float:
        return float(np.sum(self.node_mass))

    def neighbor(self, offset: Tuple[int, ...]) -> np.ndarray:
        """Row of the lattice neighbour at the given index offset, or -1 when absent."""
        target = self.index + np.asarray(offset, dtype=int)
        inside = np.all((target >= 0) & (target < np.asarray(self.shape)), axis=1)
        rows = np.full(self.size, -1, dtype=int)
        if np.any(inside):
            rows[inside] = self.lookup[tuple(target[inside].T)]
        return rows

    def lifted_nodes(self) -> np.ndarray:
        return lift_to_sphere(self.nodes)


@dataclass(frozen=True)
class AtomicMeasure:
    """Atomic target measure sum_j g_j delta_{y_j}."""
    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = np.atleast_2d(np.asarray(self.atoms, dtype=float))
        weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)
        if atoms.shape[0] != weights.shape[0]:
            raise ConfigValidationError("atom and weight counts differ")
        if np.any(weights <= 0):
            raise ConfigValidationError("target weights must be positive")
        if atoms.shape[0] > 1 and np.min(pdist(atoms)) <= 0.0:
            raise ConfigValidationError("target atoms must be pairwise distinct")

    @property
    def count(self) -> int:
        return int(self.atoms.shape[0])

    @property
    def mass(self) -> float:
        return float(np.sum(self.weights))
