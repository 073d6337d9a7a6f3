"""Constraint catalog entries."""
from enum import Enum

from pydantic import BaseModel, model_validator


class FamilyId(str, Enum):
    """Catalog identifiers."""
    OT_COST = "ot-cost"
    REFLECTOR_FF = "reflector-ff"
    REFRACTOR_FF = "refractor-ff"
    REFLECTOR_NF_POINT = "reflector-nf-point"
    REFLECTOR_NF_PARALLEL = "reflector-nf-parallel"
    REFRACTOR_NF_POINT = "refractor-nf-point"
    REFRACTOR_NF_PARALLEL = "refractor-nf-parallel"


class CostName(str, Enum):
    """Transport costs for the ot-cost family."""
    QUADRATIC = "quadratic"
    LOG_REFLECTOR = "log-reflector"
    LOG_REFRACTOR = "log-refractor"


class RefractionRegime(str, Enum):
    """Which side of 1 the refraction ratio lies on."""
    BELOW_ONE = "kappa-below-one"
    ABOVE_ONE = "kappa-above-one"


REFRACTIVE_FAMILIES = {FamilyId.REFRACTOR_FF, FamilyId.REFRACTOR_NF_POINT, FamilyId.REFRACTOR_NF_PARALLEL}


class CatalogEntry(BaseModel):
    """Family identifier plus geometric and physical parameters."""
    identifier: FamilyId
    dimension: int = 2
    cost: CostName = CostName.QUADRATIC
    kappa: float = 2.0 / 3.0
    regime: RefractionRegime = RefractionRegime.BELOW_ONE
    h: float = 1.0
    tau: float = 0.05
    delta0: float = 0.1  # reflector margin on <X, Y/|Y|>
    delta: float = 0.9  # parallel refractor radius factor
    r0: float = 0.5  # sampling radius for source and target regions
    s_max: float = 2.0  # upper s of the parallel reflector sampling region

    @model_validator(mode="after")
    def _check_parameters(self) -> "CatalogEntry":
        if self.dimension not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.dimension}")
        if self.h <= 0:
            raise ValueError("target height h must be positive")
        for name in ("tau", "delta0", "delta", "r0", "s_max"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not (self.delta0 < 1.0 and self.delta < 1.0):
            raise ValueError("delta0 and delta must be below 1")
        if self.s_max <= 0.5:
            raise ValueError("s_max must exceed 0.5")
        refracts = self.identifier in REFRACTIVE_FAMILIES or (
            self.identifier == FamilyId.OT_COST and self.cost == CostName.LOG_REFRACTOR
        )
        if refracts:
            if self.regime == RefractionRegime.BELOW_ONE and not (0.0 < self.kappa < 1.0):
                raise ValueError(f"kappa must lie in (0, 1) for a kappa<1 family, got {self.kappa}")
            if self.regime == RefractionRegime.ABOVE_ONE and not self.kappa > 1.0:
                raise ValueError(f"kappa must exceed 1 for a kappa>1 family, got {self.kappa}")
            if self.identifier == FamilyId.REFRACTOR_NF_PARALLEL and self.regime != RefractionRegime.BELOW_ONE:
                raise ValueError("refractor-nf-parallel is defined for kappa < 1 only")
        return self
