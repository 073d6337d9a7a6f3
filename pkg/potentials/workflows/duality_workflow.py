"""Duality workflow: primal and dual optima of a finite instance."""
import logging
from pathlib import Path
from typing import Optional, Union

from potentials.models.config import ExitCode
from potentials.services.config_service import ConfigService
from potentials.services.duality_service import DualityService
from potentials.services.report_service import ReportService
from potentials.utils.errors import ConfigValidationError, PotentialsError

logger = logging.getLogger(__name__)


class DualityWorkflow:
    """Workflow for the duality-gap command."""

    def __init__(self):
        """Initialize duality workflow."""
        self.config_service = ConfigService()
        self.duality_service = DualityService()

    def run(
        self,
        config_path: Union[str, Path],
        out_dir: Union[str, Path],
        seed: Optional[int] = None,
        tol: Optional[float] = None
    ) -> ExitCode:
        """Run the gap experiment and optional weak-duality trials; write gap_report.json."""
        reports = ReportService(out_dir)
        try:
            config = self.config_service.load_duality(config_path)
        except ConfigValidationError as e:
            logger.error(f"Error reading duality config: {e}")
            return ExitCode.CONFIG_ERROR
        seed = config.seed if seed is None else seed
        tol = config.tol_gap if tol is None else tol
        header = {"seed": seed, "tolerance": tol, "config": self.config_service.dump(config)}

        try:
            instance = self.config_service.build_instance(config)
            gap = self.duality_service.gap_experiment(instance, tol, config.mu_max)
            weak = None
            if config.weak_duality_trials:
                weak = self.duality_service.weak_duality_check(instance, config.weak_duality_trials, seed)
        except PotentialsError as e:
            logger.error(f"Error in duality experiment: {e}")
            reports.write_json("gap_report.json", {**header, "status": "error", "error": str(e)})
            return ExitCode.CONFIG_ERROR

        failed = gap.passed is False or (weak is not None and not weak.passed)
        if not gap.asserted:
            status = "unasserted"
        else:
            status = "failed" if failed else "passed"
        reports.write_json("gap_report.json", {
            **header,
            "status": status,
            "gap": gap.model_dump(),
            "weak_duality": weak.model_dump() if weak is not None else None,
        })
        return ExitCode.FAILED if failed else ExitCode.OK
