"""Constraint catalog service."""
import logging
from typing import Dict, Type

import numpy as np

from potentials.families.base import ConstraintFamily
from potentials.families.reflectors import ParallelReflectorFamily, PointReflectorFamily
from potentials.families.refractors import ParallelRefractorFamily, PointRefractorFamily
from potentials.families.transport import TransportCostFamily
from potentials.models.catalog import CatalogEntry, CostName, FamilyId

logger = logging.getLogger(__name__)

FAMILY_CLASSES: Dict[FamilyId, Type[ConstraintFamily]] = {
    FamilyId.OT_COST: TransportCostFamily,
    FamilyId.REFLECTOR_FF: TransportCostFamily,
    FamilyId.REFRACTOR_FF: TransportCostFamily,
    FamilyId.REFLECTOR_NF_POINT: PointReflectorFamily,
    FamilyId.REFLECTOR_NF_PARALLEL: ParallelReflectorFamily,
    FamilyId.REFRACTOR_NF_POINT: PointRefractorFamily,
    FamilyId.REFRACTOR_NF_PARALLEL: ParallelRefractorFamily,
}

# far-field identifiers are OT costs with a fixed cost name
FAR_FIELD_COSTS = {
    FamilyId.REFLECTOR_FF: CostName.LOG_REFLECTOR,
    FamilyId.REFRACTOR_FF: CostName.LOG_REFRACTOR,
}


class CatalogService:
    """Service for building constraint families from catalog entries."""

    def make_family(self, entry: CatalogEntry) -> ConstraintFamily:
        """Instantiate the family named by the entry."""
        try:
            if entry.identifier in FAR_FIELD_COSTS:
                entry = entry.model_copy(update={"cost": FAR_FIELD_COSTS[entry.identifier]})
            family = FAMILY_CLASSES[entry.identifier](entry)
            family.identifier = entry.identifier.value
            logger.info(f"Created family {family.identifier} (n={family.dimension}, theta0={family.theta0:.4g})")
            return family
        except Exception as e:
            logger.error(f"Error creating family {entry.identifier}: {e}")
            raise

    def validity(self, entry: CatalogEntry, x, y, s) -> bool:
        """True iff every inequality of the family holds at (x, y, s)."""
        family = self.make_family(entry)
        return bool(np.all(family.valid(x, y, s)))
