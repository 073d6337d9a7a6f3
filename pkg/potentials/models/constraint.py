"""Constraint-core report models."""
from typing import Dict, List, Optional

from pydantic import BaseModel, Field


class DerivativeReport(BaseModel):
    """Finite-difference validation of a family's derivative evaluators."""
    family: str
    errors: Dict[str, float] = Field(default_factory=dict)
    first_order_max: float = 0.0
    second_order_max: float = 0.0
    sample_count: int
    seed: int
    worst_derivative: Optional[str] = None
    worst_location: Dict[str, List[float]] = Field(default_factory=dict)
    passed: bool = True


class SampleExtremum(BaseModel):
    """Minimum of a sampled quantity and where it occurred."""
    family: str
    value: float
    sample_count: int
    seed: int
    location: Dict[str, List[float]] = Field(default_factory=dict)
    bound: Optional[float] = None
    satisfied: Optional[bool] = None
