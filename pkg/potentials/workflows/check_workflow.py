"""Check workflow: sampled hypothesis checks for one catalog family."""
import logging
from pathlib import Path
from typing import Union

from pydantic import ValidationError

from potentials.models.catalog import CatalogEntry
from potentials.models.config import ExitCode
from potentials.services.catalog_service import CatalogService
from potentials.services.constraint_service import ConstraintService
from potentials.services.report_service import ReportService
from potentials.utils.errors import ConfigValidationError, PotentialsError

logger = logging.getLogger(__name__)


class CheckWorkflow:
    """Workflow for derivative, (H2) and monotonicity checks."""

    def __init__(self):
        """Initialize check workflow."""
        self.catalog_service = CatalogService()
        self.constraint_service = ConstraintService()

    def run(self, family_id: str, samples: int, seed: int, out_dir: Union[str, Path]) -> ExitCode:
        """Write check_report.json; exit 3 when a derivative or the theta0 bound fails."""
        reports = ReportService(out_dir)
        header = {"family": family_id, "samples": samples, "seed": seed}
        try:
            try:
                entry = CatalogEntry(identifier=family_id)
            except ValidationError as e:
                raise ConfigValidationError(f"unknown family {family_id}: {e}") from e
            family = self.catalog_service.make_family(entry)
            derivatives = self.constraint_service.check_derivatives(family, samples, seed)
            h2 = self.constraint_service.check_H2(family, samples, seed)
            monotonicity = self.constraint_service.check_monotonicity(family, samples, seed)
        except PotentialsError as e:
            logger.error(f"Error checking {family_id}: {e}")
            reports.write_json("check_report.json", {**header, "status": "error", "error": str(e)})
            return ExitCode.CONFIG_ERROR

        passed = derivatives.passed and bool(monotonicity.satisfied)
        reports.write_json("check_report.json", {
            **header,
            "status": "passed" if passed else "failed",
            "derivatives": derivatives.model_dump(),
            "h2": h2.model_dump(),
            "monotonicity": monotonicity.model_dump(),
        })
        return ExitCode.OK if passed else ExitCode.FAILED
