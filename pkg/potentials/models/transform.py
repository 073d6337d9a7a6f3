"""Dual potentials, cell decompositions and conjugation results."""
from dataclasses import dataclass, field
from typing import Any, Dict, List

import numpy as np


@dataclass(frozen=True)
class DualPotential:
    """Dual weights s_j on the atoms and the induced envelope on the grid nodes.

    branches[i, j] = -phi(x_i, y_j, s_j); u = min_j branches; gradients hold
    the branch gradients -phi_x with shape (N, J, n).
    """
    family: Any = field(repr=False)
    atoms: np.ndarray
    s: np.ndarray
    branches: np.ndarray = field(repr=False)
    gradients: np.ndarray = field(repr=False)
    u: np.ndarray = field(repr=False)
    active: np.ndarray = field(repr=False)

    @property
    def count(self) -> int:
        return int(self.atoms.shape[0])


@dataclass(frozen=True)
class CellDecomposition:
    """Per-node cell membership and per-atom masses."""
    active: np.ndarray
    boundary: np.ndarray
    membership: np.ndarray = field(repr=False)
    masses: np.ndarray
    mode: str = "fractional"
    boundary_mass: float = 0.0

    def node_lists(self) -> List[np.ndarray]:
        """Nodes whose active index is each atom."""
        return [np.nonzero(self.active == j)[0] for j in range(self.masses.shape[0])]

    @property
    def boundary_mass_fraction(self) -> float:
        """Share of the source mass sitting on boundary nodes."""
        total = float(np.sum(self.masses))
        return self.boundary_mass / total if total > 0.0 else 0.0


@dataclass(frozen=True)
class TightenResult:
    """Outcome of u -> v* -> u** conjugation."""
    u: np.ndarray
    s: np.ndarray
    potential: DualPotential = field(repr=False)
    dual_pair_residual: float
    feasibility_violation: float = 0.0


@dataclass(frozen=True)
class EnvelopeGradient:
    """Central-difference Du at a node and the envelope identity residual."""
    node: int
    atom: int
    gradient: np.ndarray
    residual: float


@dataclass(frozen=True)
class MassResidual:
    """Per-atom residual M_j - g_j."""
    residuals: np.ndarray
    max_relative: float
    total: float

    def to_dict(self) -> Dict[str, Any]:
        return {"residuals": self.residuals.tolist(), "max_relative": self.max_relative, "total": self.total}
