"""Verify workflow: raytrace a solved potential against its target."""
import logging
from pathlib import Path
from typing import Optional, Union

import numpy as np

from potentials.models.config import ExitCode
from potentials.services.catalog_service import CatalogService
from potentials.services.config_service import ConfigService
from potentials.services.optics_service import OpticsService
from potentials.services.report_service import ReportService
from potentials.services.transform_service import TransformService
from potentials.utils.errors import ConfigValidationError, PotentialsError

logger = logging.getLogger(__name__)


class VerifyWorkflow:
    """Workflow for the raytrace verification command."""

    def __init__(self):
        """Initialize verify workflow."""
        self.config_service = ConfigService()
        self.catalog_service = CatalogService()
        self.transform_service = TransformService()
        self.optics_service = OpticsService()

    def run(
        self,
        config_path: Union[str, Path],
        report_path: Union[str, Path],
        out_dir: Union[str, Path],
        rays: Optional[int] = None,
        tol: Optional[float] = None,
        seed: Optional[int] = None
    ) -> ExitCode:
        """Trace the solved potential and write trace_report.json and rays.csv."""
        reports = ReportService(out_dir)
        try:
            config = self.config_service.load_problem(config_path)
        except ConfigValidationError as e:
            logger.error(f"Error reading problem config: {e}")
            return ExitCode.CONFIG_ERROR
        seed = config.seed if seed is None else seed
        rays = config.verify.rays_per_node if rays is None else rays
        tol = config.verify.tol_histogram if tol is None else tol
        instance_hash = self.config_service.instance_hash(config)
        header = {"instance_hash": instance_hash, "seed": seed, "tolerance": tol, "rays_per_node": rays}

        try:
            solved = reports.read_json(report_path)
        except (OSError, ValueError) as e:
            logger.error(f"Error reading solve report: {e}")
            reports.write_json("trace_report.json", {**header, "status": "error", "error": str(e)})
            return ExitCode.CONFIG_ERROR
        if solved.get("instance_hash") != instance_hash or "report" not in solved:
            logger.error("Solve report does not belong to this config")
            reports.write_json("trace_report.json", {
                **header, "status": "hash-mismatch", "report_hash": solved.get("instance_hash")
            })
            return ExitCode.CONFIG_ERROR

        try:
            family = self.catalog_service.make_family(config.family)
            grid = self.config_service.build_grid(config)
            measure = self.config_service.build_target(config, family, grid)
            s = np.asarray(solved["report"]["s"], dtype=float)
            if s.shape != (measure.count,):
                raise ConfigValidationError(f"report holds {s.size} weights for {measure.count} atoms")
            potential = self.transform_service.build_potential(family, grid, measure.atoms, s)
            trace = self.optics_service.trace(
                grid, potential, measure, rays, config.verify.gradient_mode, seed
            )
            agreement = self.optics_service.map_agreement(grid, potential, trace)
        except PotentialsError as e:
            logger.error(f"Error verifying {config.family.identifier.value}: {e}")
            reports.write_json("trace_report.json", {**header, "status": "error", "error": str(e)})
            return ExitCode.CONFIG_ERROR

        passed = trace.histogram_l1 <= tol
        reports.write_json("trace_report.json", {
            **header,
            "status": "passed" if passed else "tolerance-exceeded",
            "trace": trace.summary(),
            "map_agreement": agreement.model_dump(),
        })
        if config.output.rays_csv:
            n = grid.dimension
            columns = [trace.origins[:, k] for k in range(n)] + [trace.hits[:, k] for k in range(n)]
            columns += [trace.atoms, trace.cell_atoms, trace.ray_mass]
            names = [f"x{k + 1}" for k in range(n)] + [f"hit{k + 1}" for k in range(n)] + ["atom", "cell_atom", "mass"]
            reports.write_csv("rays.csv", names, columns)
        if not passed:
            logger.warning(f"Histogram distance {trace.histogram_l1:.3e} exceeds tolerance {tol:.3e}")
        return ExitCode.OK if passed else ExitCode.FAILED
