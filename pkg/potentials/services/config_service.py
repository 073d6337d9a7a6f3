"""Problem configuration loading and instance construction."""
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Type, TypeVar, Union

import numpy as np
from pydantic import BaseModel, ValidationError

from potentials.families.base import ConstraintFamily
from potentials.models.config import DualityConfig, GeneratorKind, ProblemConfig, TargetGenerator
from potentials.models.duality import FiniteInstance
from potentials.models.geometry import AtomicMeasure, SourceGrid
from potentials.services.catalog_service import CatalogService
from potentials.services.duality_service import DualityService
from potentials.services.measure_service import MeasureService
from potentials.utils.errors import ConfigValidationError
from potentials.utils.helpers import generate_instance_hash

logger = logging.getLogger(__name__)

ConfigT = TypeVar("ConfigT", bound=BaseModel)


class ConfigService:
    """Service for reading configs and turning them into grids, targets and instances."""

    def __init__(self):
        """Initialize config service."""
        self.catalog_service = CatalogService()
        self.measure_service = MeasureService()
        self.duality_service = DualityService()

    def _load(self, source: Union[str, Path, Dict[str, Any]], model: Type[ConfigT]) -> ConfigT:
        try:
            if isinstance(source, dict):
                data = source
            else:
                path = Path(source)
                if not path.exists():
                    raise ConfigValidationError(f"config file not found: {path}")
                with open(path, "r", encoding="utf-8") as f:
                    data = json.load(f)
            config = model.model_validate(data)
            logger.info(f"Loaded {model.__name__}")
            return config
        except ConfigValidationError as e:
            logger.error(f"Error loading config: {e}")
            raise
        except (ValidationError, json.JSONDecodeError, ValueError, TypeError) as e:
            logger.error(f"Error loading config: {e}")
            raise ConfigValidationError(str(e)) from e

    def load_problem(self, source: Union[str, Path, Dict[str, Any]]) -> ProblemConfig:
        """Parse a semi-discrete problem config."""
        return self._load(source, ProblemConfig)

    def load_duality(self, source: Union[str, Path, Dict[str, Any]]) -> DualityConfig:
        """Parse a finite duality instance config."""
        return self._load(source, DualityConfig)

    def dump(self, config: BaseModel) -> Dict[str, Any]:
        """JSON-ready dict that validates back to an equal config."""
        return config.model_dump(mode="json")

    def instance_hash(self, config: ProblemConfig) -> str:
        """sha256 of the canonical (family, source, target) triple."""
        return generate_instance_hash({
            "family": config.family.model_dump(mode="json"),
            "source": config.source.model_dump(mode="json"),
            "target": config.target.model_dump(mode="json"),
        })

    def build_grid(self, config: ProblemConfig) -> SourceGrid:
        return self.measure_service.build_grid(config.source.chart, config.source.resolution, config.source.density)

    def generate_points(self, generator: TargetGenerator, dimension: int, seed: int) -> np.ndarray:
        """Planar atom positions from a generator."""
        center = np.zeros(dimension) if generator.center is None else np.asarray(generator.center, dtype=float)
        if center.shape != (dimension,):
            raise ConfigValidationError(f"generator center must have {dimension} entries")
        count = generator.count
        if generator.kind == GeneratorKind.CIRCLE:
            if dimension == 1:
                # the 1-sphere of a line is two points; spread the atoms across the diameter instead
                offsets = np.linspace(-generator.radius, generator.radius, count) if count > 1 else np.zeros(1)
                return center + offsets[:, None]
            angles = 2.0 * math.pi * np.arange(count) / count
            return center + generator.radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
        if generator.kind == GeneratorKind.GRID:
            side = round(count ** (1.0 / dimension))
            if side ** dimension != count:
                raise ConfigValidationError(f"grid generator needs a perfect power count, got {count}")
            axis = np.linspace(-generator.radius, generator.radius, side) if side > 1 else np.zeros(1)
            mesh = np.meshgrid(*([axis] * dimension), indexing="ij")
            return center + np.stack([m.ravel() for m in mesh], axis=1)
        lower = center - generator.radius if generator.lower is None else np.asarray(generator.lower, dtype=float)
        upper = center + generator.radius if generator.upper is None else np.asarray(generator.upper, dtype=float)
        rng = np.random.default_rng(seed)
        return lower + rng.random((count, dimension)) * (upper - lower)

    def build_target(self, config: ProblemConfig, family: ConstraintFamily, grid: SourceGrid) -> AtomicMeasure:
        """Atoms embedded in the family's target space with weights, normalized to the source mass when asked."""
        target = config.target
        if target.generator is not None:
            points = self.generate_points(target.generator, family.dimension, config.seed)
        else:
            points = np.asarray(target.atoms, dtype=float)
        if points.ndim != 2:
            raise ConfigValidationError("target atoms must be a list of points")
        if points.shape[1] == family.dimension:
            atoms = family.embed_target(points)
        elif points.shape[1] == family.target_dimension:
            atoms = points
        else:
            raise ConfigValidationError(
                f"target atoms need {family.dimension} or {family.target_dimension} coordinates, got {points.shape[1]}"
            )
        weights = np.ones(atoms.shape[0]) if target.weights is None else np.asarray(target.weights, dtype=float)
        if target.normalize:
            weights = weights * (grid.mass / np.sum(weights))
        return self.measure_service.build_measure(atoms, weights)

    def build_instance(self, config: DualityConfig) -> FiniteInstance:
        """Finite instance from a duality config."""
        family = self.catalog_service.make_family(config.family) if config.family is not None else None
        return self.duality_service.build_instance(
            np.asarray(config.x, dtype=float),
            np.asarray(config.y, dtype=float),
            config.objective,
            config.t_bounds,
            config.s_bounds,
            source_weights=config.source_weights,
            target_weights=config.target_weights,
            cost=None if config.cost is None else np.asarray(config.cost, dtype=float),
            family=family
        )
