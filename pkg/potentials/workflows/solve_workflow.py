"""Solve workflow: config in, dual weights and cell map out."""
import logging
from pathlib import Path
from typing import Optional, Union

from potentials.models.config import ExitCode, ProblemConfig
from potentials.services.catalog_service import CatalogService
from potentials.services.config_service import ConfigService
from potentials.services.report_service import ReportService
from potentials.services.solver_service import SolverService
from potentials.services.transform_service import TransformService
from potentials.utils.errors import ConfigValidationError, PotentialsError

logger = logging.getLogger(__name__)


class SolveWorkflow:
    """Workflow for the semi-discrete solve command."""

    def __init__(self):
        """Initialize solve workflow."""
        self.config_service = ConfigService()
        self.catalog_service = CatalogService()
        self.solver_service = SolverService()
        self.transform_service = TransformService()

    def apply_overrides(self, config: ProblemConfig, seed: Optional[int], tol: Optional[float]) -> ProblemConfig:
        updates = {}
        if seed is not None:
            updates["seed"] = seed
        if tol is not None:
            updates["solver"] = config.solver.model_copy(update={"tol_mass": tol})
        return config.model_copy(update=updates) if updates else config

    def run(
        self,
        config_path: Union[str, Path],
        out_dir: Union[str, Path],
        seed: Optional[int] = None,
        tol: Optional[float] = None
    ) -> ExitCode:
        """Solve and write solve_report.json, solve_timing.json and cells.csv."""
        reports = ReportService(out_dir)
        try:
            config = self.apply_overrides(self.config_service.load_problem(config_path), seed, tol)
        except ConfigValidationError as e:
            logger.error(f"Error reading problem config: {e}")
            return ExitCode.CONFIG_ERROR
        instance_hash = self.config_service.instance_hash(config)
        header = {"instance_hash": instance_hash, "seed": config.seed, "config": self.config_service.dump(config)}

        try:
            family = self.catalog_service.make_family(config.family)
            grid = self.config_service.build_grid(config)
            measure = self.config_service.build_target(config, family, grid)
            potential, report = self.solver_service.solve_semidiscrete(family, grid, measure, config.solver)
        except PotentialsError as e:
            logger.error(f"Error solving {config.family.identifier.value}: {e}")
            reports.write_json("solve_report.json", {**header, "status": "error", "error": str(e)})
            return ExitCode.CONFIG_ERROR

        status = "converged" if report.converged else "not-converged"
        reports.write_json("solve_report.json", {**header, "status": status, "report": report.model_dump()})
        reports.write_json("solve_timing.json", {"instance_hash": instance_hash, "wall_clock": report.wall_clock})
        if config.output.cells_csv:
            columns = [grid.nodes[:, k] for k in range(grid.dimension)] + [potential.active, potential.u]
            header_names = [f"x{k + 1}" for k in range(grid.dimension)] + ["atom", "u"]
            reports.write_csv("cells.csv", header_names, columns)

        logger.info(f"Solve finished: {status}, max relative residual {report.max_relative_residual:.3e}")
        return ExitCode.OK if report.converged else ExitCode.FAILED
