"""Report writing service."""
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Union

import numpy as np

from potentials.config.settings import settings
from potentials.utils.helpers import to_builtin

logger = logging.getLogger(__name__)


def _finite(value: Any) -> Any:
    """Replace NaN and infinities with None so reports stay strict JSON."""
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _finite(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_finite(v) for v in value]
    return value


class ReportService:
    """Service for JSON reports and CSV plot data."""

    def __init__(self, output_dir: Union[str, Path, None] = None):
        """Initialize report service."""
        self.output_dir = Path(output_dir or settings.output_dir)

    def write_json(self, name: str, payload: Dict[str, Any]) -> Path:
        """Write a report with its schema version; keys sorted so equal reports are equal bytes."""
        path = self.output_dir / name
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            document = {"schema_version": settings.schema_version, **payload}
            text = json.dumps(_finite(to_builtin(document)), sort_keys=True, indent=2, allow_nan=False)
            with open(path, "w", encoding="utf-8") as f:
                f.write(text + "\n")
            logger.info(f"Wrote {path}")
            return path
        except Exception as e:
            logger.error(f"Error writing report {path}: {e}")
            raise

    def write_csv(self, name: str, header: List[str], columns: List[np.ndarray]) -> Path:
        """Write equal-length numeric columns as CSV."""
        path = self.output_dir / name
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            table = np.column_stack([np.asarray(c, dtype=float) for c in columns])
            np.savetxt(path, table, delimiter=",", header=",".join(header), comments="", fmt="%.17g")
            logger.info(f"Wrote {table.shape[0]} rows to {path}")
            return path
        except Exception as e:
            logger.error(f"Error writing CSV {path}: {e}")
            raise

    def read_json(self, path: Union[str, Path]) -> Dict[str, Any]:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
