"""Solver options and reports."""
from typing import List, Optional

from pydantic import BaseModel, Field, field_validator


class SolveOptions(BaseModel):
    """Semi-discrete solver options."""
    tol_mass: float = 1e-6
    max_sweeps: int = 500
    anchor: int = 0
    bisection_depth: int = 80
    newton: bool = False
    membership: Optional[str] = None

    @field_validator("tol_mass")
    @classmethod
    def _positive_tolerance(cls, value: float) -> float:
        if value <= 0:
            raise ValueError("tol_mass must be positive")
        return value

    @field_validator("max_sweeps", "bisection_depth")
    @classmethod
    def _at_least_one(cls, value: int) -> int:
        if value < 1:
            raise ValueError("sweep and bisection counts must be at least 1")
        return value

    @field_validator("anchor")
    @classmethod
    def _nonnegative_anchor(cls, value: int) -> int:
        if value < 0:
            raise ValueError("anchor index must be nonnegative")
        return value

    @field_validator("membership")
    @classmethod
    def _known_membership(cls, value: Optional[str]) -> Optional[str]:
        if value is not None and value not in ("fractional", "nodal"):
            raise ValueError(f"unknown membership mode: {value}")
        return value


class SolveReport(BaseModel):
    """Outcome of a semi-discrete solve."""
    family: str
    s: List[float]
    masses: List[float]
    targets: List[float]
    residuals: List[float]
    max_relative_residual: float
    sweeps: int
    converged: bool
    objective: float
    dual_pair_residual: float
    tighten_shift: float
    deficit_history: List[float] = Field(default_factory=list)
    total_deficit_history: List[float] = Field(default_factory=list)
    anchor: int = 0
    newton_steps: int = 0
    wall_clock: float = Field(default=0.0, exclude=True)


class OracleResult(BaseModel):
    """Brute-force assignment optimum against the Kantorovich dual."""
    size: int
    primal_value: float
    assignment: List[int]
    assignment_check_value: float
    dual_value: float
    u: List[float]
    v: List[float]
    gap: float
