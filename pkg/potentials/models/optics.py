"""Rays, trace reports and Monge-Ampere residual fields."""
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field

from potentials.utils.errors import OpticsError

GRADIENT_MODES = ("fd", "closed")


@dataclass(frozen=True)
class Ray:
    """Rays with origins and unit directions in R^{n+1}; leading axes index a bundle."""
    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        direction = np.asarray(self.direction, dtype=float)
        norm = np.linalg.norm(direction, axis=-1, keepdims=True)
        if not np.all(np.isfinite(norm)) or np.any(norm == 0.0):
            raise OpticsError("ray direction must be a nonzero vector")
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=float))
        object.__setattr__(self, "direction", direction / norm)

    def intersect_plane(self, height: float) -> np.ndarray:
        """Points where the rays meet {z = height}; NaN rows for parallel or backward rays."""
        vertical = self.direction[..., -1]
        with np.errstate(divide="ignore", invalid="ignore"):
            distance = (height - self.origin[..., -1]) / vertical
        missed = (np.abs(vertical) < 1e-14) | ~(distance >= 0.0)
        points = self.origin + np.where(missed, 0.0, distance)[..., None] * self.direction
        return np.where(missed[..., None], np.nan, points)


@dataclass(frozen=True)
class RefractionResult:
    """Refracted direction, or the total internal reflection outcome."""
    direction: Optional[np.ndarray]
    total_internal_reflection: bool = False


@dataclass(frozen=True)
class TraceReport:
    """Per-ray hits on the target plane and the per-atom illumination histogram.

    Rays that miss the plane or reflect internally have NaN hits and atom -1.
    """
    tracer: str
    origins: np.ndarray = field(repr=False)
    nodes: np.ndarray = field(repr=False)
    ray_mass: np.ndarray = field(repr=False)
    hits: np.ndarray = field(repr=False)
    atoms: np.ndarray = field(repr=False)
    cell_atoms: np.ndarray = field(repr=False)
    hit_mass: np.ndarray
    target_mass: np.ndarray
    traced_mass: float
    miss_mass: float
    miss_count: int
    tir_count: int = 0
    gradient_mode: str = "fd"

    @property
    def ray_count(self) -> int:
        return int(self.ray_mass.shape[0])

    @property
    def histogram_l1(self) -> float:
        """sum_j |hit_j - g_j| relative to the traced mass."""
        return float(np.sum(np.abs(self.hit_mass - self.target_mass)) / self.traced_mass)

    @property
    def energy_defect(self) -> float:
        return float(abs(np.sum(self.hit_mass) + self.miss_mass - self.traced_mass))

    def summary(self) -> Dict[str, Any]:
        return {
            "tracer": self.tracer,
            "gradient_mode": self.gradient_mode,
            "ray_count": self.ray_count,
            "hit_mass": self.hit_mass.tolist(),
            "target_mass": self.target_mass.tolist(),
            "traced_mass": self.traced_mass,
            "miss_mass": self.miss_mass,
            "miss_count": self.miss_count,
            "tir_count": self.tir_count,
            "histogram_l1": self.histogram_l1,
            "energy_defect": self.energy_defect,
        }


class MapAgreement(BaseModel):
    """Cell-assigned atoms against raytraced hits at interior nodes."""
    max_distance: float
    match_fraction: float
    compared_mass: float
    compared_rays: int
    half_spacing: float
    boundary_mass_fraction: float


class MAResidual(BaseModel):
    """Residual fields of a smooth potential on the nodes where the stencils close."""
    nodes: List[int] = Field(default_factory=list, repr=False)
    residual: List[float] = Field(default_factory=list, repr=False)
    jacobian_nodes: List[int] = Field(default_factory=list, repr=False)
    jacobian_residual: List[float] = Field(default_factory=list, repr=False)
    max_residual: float
    max_jacobian_residual: float
    spacing: float
