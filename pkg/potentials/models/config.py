"""Problem and duality-instance configuration models."""
from enum import Enum, IntEnum
from typing import List, Optional, Tuple

from pydantic import BaseModel, Field, field_validator, model_validator

from potentials.config.settings import settings
from potentials.models.catalog import CatalogEntry
from potentials.models.duality import ObjectiveSpec
from potentials.models.geometry import DensitySpec, SourceChart
from potentials.models.solve import SolveOptions


class ExitCode(IntEnum):
    """Process exit codes of the command-line workflows."""
    OK = 0
    CONFIG_ERROR = 2
    FAILED = 3


class GeneratorKind(str, Enum):
    """Target atom generators."""
    CIRCLE = "circle"
    GRID = "grid"
    RANDOM = "random"


class TargetGenerator(BaseModel):
    """Planar atom positions: a circle, a square lattice or seeded uniform points in a box."""
    kind: GeneratorKind
    count: int = 4
    center: Optional[List[float]] = None
    radius: float = 0.25
    lower: Optional[List[float]] = None
    upper: Optional[List[float]] = None

    @field_validator("count")
    @classmethod
    def _positive_count(cls, value: int) -> int:
        if value < 1:
            raise ValueError("generator count must be at least 1")
        return value


class TargetSpec(BaseModel):
    """Explicit atoms or a generator, weights and normalization."""
    atoms: Optional[List[List[float]]] = None
    weights: Optional[List[float]] = None
    generator: Optional[TargetGenerator] = None
    normalize: bool = True

    @model_validator(mode="after")
    def _one_source(self) -> "TargetSpec":
        if (self.atoms is None) == (self.generator is None):
            raise ValueError("target needs exactly one of atoms or generator")
        if self.atoms is not None and self.weights is not None and len(self.weights) != len(self.atoms):
            raise ValueError("target weights and atoms differ in length")
        return self


class SourceSpec(BaseModel):
    """Source chart, lattice resolution and density."""
    chart: SourceChart = Field(default_factory=SourceChart)
    resolution: int = 40
    density: DensitySpec = Field(default_factory=DensitySpec)


class VerifyOptions(BaseModel):
    """Raytrace verification options."""
    rays_per_node: int = 1
    tol_histogram: float = 0.01
    gradient_mode: str = "fd"

    @field_validator("gradient_mode")
    @classmethod
    def _known_mode(cls, value: str) -> str:
        if value not in ("fd", "closed"):
            raise ValueError(f"unknown gradient mode: {value}")
        return value


class OutputOptions(BaseModel):
    """Which bulk CSV files to write."""
    cells_csv: bool = True
    rays_csv: bool = True


class ProblemConfig(BaseModel):
    """Semi-discrete problem: family, source, target and run options."""
    schema_version: str = settings.schema_version
    seed: int = settings.default_seed
    family: CatalogEntry
    source: SourceSpec = Field(default_factory=SourceSpec)
    target: TargetSpec
    solver: SolveOptions = Field(default_factory=SolveOptions)
    verify: VerifyOptions = Field(default_factory=VerifyOptions)
    output: OutputOptions = Field(default_factory=OutputOptions)

    @model_validator(mode="after")
    def _matching_dimensions(self) -> "ProblemConfig":
        if self.family.dimension != self.source.chart.dimension:
            raise ValueError("family and source chart dimensions differ")
        return self


class DualityConfig(BaseModel):
    """Finite duality instance: grids, weights, objective, constraint and value box."""
    schema_version: str = settings.schema_version
    seed: int = settings.default_seed
    x: List[List[float]]
    y: List[List[float]]
    source_weights: Optional[List[float]] = None
    target_weights: Optional[List[float]] = None
    cost: Optional[List[List[float]]] = None
    family: Optional[CatalogEntry] = None
    objective: ObjectiveSpec = Field(default_factory=ObjectiveSpec)
    t_bounds: Tuple[float, float] = (-1.0, 1.0)
    s_bounds: Tuple[float, float] = (-1.0, 1.0)
    tol_gap: float = 1e-4
    mu_max: Optional[float] = None
    weak_duality_trials: int = 0

    @model_validator(mode="after")
    def _constraint_given(self) -> "DualityConfig":
        if (self.cost is None) == (self.family is None):
            raise ValueError("instance needs exactly one of cost or family")
        if self.tol_gap <= 0:
            raise ValueError("tol_gap must be positive")
        if self.weak_duality_trials < 0:
            raise ValueError("weak_duality_trials must be nonnegative")
        return self
