"""Finite Lagrangian duality instances and reports."""
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field


class ObjectiveKind(str, Enum):
    """Objective catalog for finite instances."""
    LINEAR_SEPARABLE = "linear-separable"
    QUADRATIC_CONCAVE = "quadratic-concave"


class ObjectiveSpec(BaseModel):
    """F(x_i, y_j, t, s) from the catalog.

    linear-separable: F = f_i t + g_j phi(x_i, y_j, s)
    quadratic-concave: F = f_i t + g_j s - alpha/2 (t - t0)^2 - beta/2 (s - s0)^2
    """
    kind: ObjectiveKind = ObjectiveKind.LINEAR_SEPARABLE
    f: Optional[List[float]] = None
    g: Optional[List[float]] = None
    alpha: float = 1.0
    beta: float = 1.0
    t0: float = 0.0
    s0: float = 0.0


@dataclass(frozen=True)
class FiniteInstance:
    """Finite grids with product weights, an objective, a constraint and a value box."""
    x: np.ndarray
    y: np.ndarray
    omega: np.ndarray
    objective: ObjectiveSpec
    t_bounds: Tuple[float, float]
    s_bounds: Tuple[float, float]
    cost: Optional[np.ndarray] = None
    family: Any = field(default=None, repr=False)
    f: np.ndarray = field(default=None, repr=False)
    g: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        rows, cols = self.omega.shape
        f = np.ones(rows) if self.objective.f is None else np.asarray(self.objective.f, dtype=float)
        g = np.ones(cols) if self.objective.g is None else np.asarray(self.objective.g, dtype=float)
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "g", g)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.omega.shape

    @property
    def variable_count(self) -> int:
        return int(sum(self.omega.shape))

    @property
    def linear(self) -> bool:
        """Linear objective and constraints, solvable as a linear program."""
        return self.cost is not None and self.objective.kind == ObjectiveKind.LINEAR_SEPARABLE

    @property
    def collapsed(self) -> bool:
        return self.t_bounds[0] == self.t_bounds[1] and self.s_bounds[0] == self.s_bounds[1]


@dataclass(frozen=True)
class InnerResult:
    """Best Lagrangian value found by the inner maximization."""
    value: float
    u: np.ndarray
    v: np.ndarray
    method: str
    success: bool = True
    message: str = ""


class GapReport(BaseModel):
    """Primal/dual optimum comparison for a finite instance."""
    primal_value: Optional[float] = None
    dual_value: float
    gap: Optional[float] = None
    multiplier: float
    slackness: Optional[float] = None
    slater_margin: float
    concave: bool
    convex_in_s: bool
    slater: bool
    asserted: bool
    passed: Optional[bool] = None
    primal_u: List[float] = Field(default_factory=list)
    primal_v: List[float] = Field(default_factory=list)
    notes: List[str] = Field(default_factory=list)


class WeakDualityResult(BaseModel):
    """Outcome of randomized weak-duality trials."""
    passed: bool
    trials: int
    seed: int
    worst_margin: float


class HcProbeResult(BaseModel):
    """Midpoint improvement for two feasible pairs."""
    margin: float
    midpoint_feasible: bool
    distinct: bool
    strict: bool
    notes: List[str] = Field(default_factory=list)
