"""Generalized conjugation, cell decomposition and solution residuals."""
import logging
from typing import Dict, Optional, Tuple

import numpy as np

from potentials.config.settings import settings
from potentials.families.base import ConstraintFamily
from potentials.models.geometry import AtomicMeasure, SourceGrid
from potentials.models.transform import (
    CellDecomposition,
    DualPotential,
    EnvelopeGradient,
    MassResidual,
    TightenResult,
)
from potentials.services.constraint_service import ConstraintService
from potentials.services.measure_service import MeasureService
from potentials.utils.errors import NondifferentiablePoint, OutsideDualDomain, ValidityError

logger = logging.getLogger(__name__)

MEMBERSHIP_MODES = ("fractional", "nodal")


def membership_width(gradients: np.ndarray, spacing: np.ndarray) -> np.ndarray:
    """Per-node band width: spread of the branch gradients over the lattice cell."""
    spread = gradients.max(axis=1) - gradients.min(axis=1)
    return spread @ np.asarray(spacing, dtype=float)


def cell_membership(
    branches: np.ndarray,
    gradients: np.ndarray,
    spacing: np.ndarray,
    mode: str = "fractional",
    tol: Optional[float] = None
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Membership matrix, active index and boundary flags for rows of branch values.

    The active branch is the lowest index within tol of the row minimum. In
    fractional mode each branch k gets a share 1/2 - gap_k / width clipped to
    [0, 1/2], where gap_k is its height above the row minimum and width the
    node's gradient spread; memberships are the odds share / (1 - share)
    normalized per row. Two branches split the node linearly in the gap, and
    memberships depend continuously on the branch values.
    """
    if mode not in MEMBERSHIP_MODES:
        raise ValueError(f"unknown membership mode: {mode}")
    tol = settings.tie_tolerance if tol is None else tol
    rows = np.arange(branches.shape[0])
    lowest = branches.min(axis=1)
    within = branches <= lowest[:, None] + tol
    active = np.argmax(within, axis=1)
    ties = within.sum(axis=1) >= 2

    if mode == "nodal":
        membership = np.zeros_like(branches)
        membership[rows, active] = 1.0
        return membership, active, ties

    gap = branches - lowest[:, None]
    width = membership_width(gradients, spacing)[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        share = np.clip(0.5 - gap / width, 0.0, 0.5)
    share = np.where(width > 0.0, share, np.where(gap <= tol, 0.5, 0.0))
    share[rows, np.argmin(branches, axis=1)] = 0.5
    odds = share / (1.0 - share)
    membership = odds / odds.sum(axis=1, keepdims=True)
    boundary = ties | (np.count_nonzero(share > 0.0, axis=1) >= 2)
    return membership, active, boundary


class TransformService:
    """Service for phi-transforms and the generalized solution checks."""

    def __init__(self):
        """Initialize transform service."""
        self.constraint_service = ConstraintService()
        self.measure_service = MeasureService()

    def branch_values(
        self,
        family: ConstraintFamily,
        nodes: np.ndarray,
        atoms: np.ndarray,
        s: np.ndarray
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Branch matrix -phi(x_i, y_j, s_j) and its x-gradients."""
        x = np.asarray(nodes, dtype=float)[:, None, :]
        y = np.asarray(atoms, dtype=float)[None, :, :]
        s = np.asarray(s, dtype=float)[None, :]
        valid = family.valid(x, y, s)
        if not np.all(valid):
            i, j = (int(v[0]) for v in np.nonzero(~valid))
            raise ValidityError(
                f"{family.identifier}: weight s_{j} = {float(s[0, j]):.6g} invalid at node {i}",
                {"node": i, "atom": j, "x": x[i, 0].tolist(), "y": y[0, j].tolist(), "s": float(s[0, j])}
            )
        return -family.phi(x, y, s), -family.phi_x(x, y, s)

    def build_potential(
        self,
        family: ConstraintFamily,
        grid: SourceGrid,
        atoms: np.ndarray,
        s: np.ndarray
    ) -> DualPotential:
        """Evaluate the envelope of the atom branches on the grid."""
        s = np.asarray(s, dtype=float).copy()
        branches, gradients = self.branch_values(family, grid.nodes, atoms, s)
        _, active, _ = cell_membership(branches, gradients, grid.spacing, "nodal")
        return DualPotential(
            family=family,
            atoms=np.asarray(atoms, dtype=float),
            s=s,
            branches=branches,
            gradients=gradients,
            u=branches.min(axis=1),
            active=active
        )

    def v_transform(
        self,
        family: ConstraintFamily,
        grid: SourceGrid,
        u_values: np.ndarray,
        atoms: np.ndarray
    ) -> np.ndarray:
        """s_j = sup{s : u_i + phi(x_i, y_j, s) <= 0 for all i} = min_i solve_s(x_i, y_j, u_i)."""
        u_values = np.asarray(u_values, dtype=float)
        if not np.all(np.isfinite(u_values)):
            raise ValueError("u values must be finite on the grid")
        try:
            roots = self.constraint_service.solve_s(
                family, grid.nodes[:, None, :], np.asarray(atoms, dtype=float)[None, :, :],
                u_values[:, None], saturate=True
            )
        except OutsideDualDomain as e:
            index = e.location.get("index")
            if index is not None:
                e.location["node"], e.location["atom"] = divmod(int(index), len(atoms))
            logger.error(f"Error in v-transform: {e} at {e.location}")
            raise
        s = roots.min(axis=0)
        if not np.all(np.isfinite(s)):
            j = int(np.nonzero(~np.isfinite(s))[0][0])
            raise OutsideDualDomain(location={"atom": j, "reason": "no node restricts this atom"})
        return s

    def u_transform(self, family: ConstraintFamily, grid: SourceGrid, potential: DualPotential) -> np.ndarray:
        """u*_i = min_j -phi(x_i, y_j, s_j)."""
        branches, _ = self.branch_values(family, grid.nodes, potential.atoms, potential.s)
        return branches.min(axis=1)

    def tighten(
        self,
        family: ConstraintFamily,
        grid: SourceGrid,
        u_values: np.ndarray,
        atoms: np.ndarray,
        s: Optional[np.ndarray] = None
    ) -> TightenResult:
        """Replace u by the dual pair (u*, s*) = (uT(vT(u)), vT(u))."""
        u_values = np.asarray(u_values, dtype=float)
        violation = 0.0
        if s is not None:
            branches, _ = self.branch_values(family, grid.nodes, atoms, s)
            violation = float(max(0.0, np.max(u_values[:, None] - branches)))
            if violation > 1e-10:
                logger.warning(f"Starting pair violates the constraint by {violation:.3e}")
        s_star = self.v_transform(family, grid, u_values, atoms)
        potential = self.build_potential(family, grid, atoms, s_star)
        residual = self.dual_pair_residual(family, grid, potential)
        return TightenResult(
            u=potential.u,
            s=s_star,
            potential=potential,
            dual_pair_residual=residual,
            feasibility_violation=violation
        )

    def dual_pair_residual(self, family: ConstraintFamily, grid: SourceGrid, potential: DualPotential) -> float:
        """max(|vT(u) - s|, |uT(s) - u|) for the pair held by the potential."""
        s_again = self.v_transform(family, grid, potential.u, potential.atoms)
        u_again = self.u_transform(family, grid, potential)
        return float(max(np.max(np.abs(s_again - potential.s)), np.max(np.abs(u_again - potential.u))))

    def decompose(
        self,
        family: ConstraintFamily,
        grid: SourceGrid,
        potential: DualPotential,
        mode: Optional[str] = None
    ) -> CellDecomposition:
        """Cells of the envelope: active atoms, boundary flags and cell masses."""
        mode = mode or settings.cell_membership
        membership, active, boundary = cell_membership(
            potential.branches, potential.gradients, grid.spacing, mode
        )
        masses = grid.node_mass @ membership
        boundary_mass = float(grid.node_mass[boundary].sum())
        logger.debug(f"Decomposed {grid.size} nodes into {potential.count} cells ({int(boundary.sum())} boundary)")
        return CellDecomposition(
            active=active, boundary=boundary, membership=membership, masses=masses, mode=mode,
            boundary_mass=boundary_mass
        )

    def interior_mask(self, grid: SourceGrid, cells: CellDecomposition) -> np.ndarray:
        """Nodes off the boundary whose axis neighbours exist, are off the boundary and share the cell."""
        mask = ~cells.boundary
        for k in range(grid.dimension):
            e = np.zeros(grid.dimension, dtype=int)
            e[k] = 1
            for offset in (e, -e):
                neighbor = grid.neighbor(tuple(offset))
                present = neighbor >= 0
                safe = np.where(present, neighbor, 0)
                mask &= present & ~cells.boundary[safe] & (cells.active[safe] == cells.active)
        return mask

    def _central_gradients(
        self,
        family: ConstraintFamily,
        grid: SourceGrid,
        potential: DualPotential,
        nodes: np.ndarray
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Central differences of the envelope at nodes, the active atoms and a same-branch flag."""
        n = grid.dimension
        x = grid.nodes[nodes]
        shifts = np.concatenate([np.diag(grid.spacing), -np.diag(grid.spacing)])
        probes = (x[:, None, :] + shifts[None, :, :]).reshape(-1, n)
        branches, _ = self.branch_values(family, probes, potential.atoms, potential.s)
        branches = branches.reshape(nodes.size, 2 * n, -1)
        atoms = potential.active[nodes]
        same = np.all(np.argmin(branches, axis=2) == atoms[:, None], axis=1)
        u_probe = branches[np.arange(nodes.size), :, atoms]
        gradient = (u_probe[:, :n] - u_probe[:, n:]) / (2.0 * grid.spacing)
        return gradient, atoms, same

    def envelope_gradient(
        self,
        family: ConstraintFamily,
        grid: SourceGrid,
        potential: DualPotential,
        node: int,
        cells: Optional[CellDecomposition] = None
    ) -> EnvelopeGradient:
        """Central-difference Du at an interior node and |phi_x(x, y_j*, s_j*) + Du|."""
        cells = cells or self.decompose(family, grid, potential)
        if not self.interior_mask(grid, cells)[node]:
            raise NondifferentiablePoint(node=node)
        gradient, atoms, same = self._central_gradients(family, grid, potential, np.array([node]))
        if not same[0]:
            raise NondifferentiablePoint(node=node)
        j = int(atoms[0])
        phi_x = family.phi_x(grid.nodes[node], potential.atoms[j], potential.s[j])
        residual = float(np.max(np.abs(phi_x + gradient[0])))
        return EnvelopeGradient(node=int(node), atom=j, gradient=gradient[0], residual=residual)

    def envelope_residuals(
        self,
        family: ConstraintFamily,
        grid: SourceGrid,
        potential: DualPotential,
        cells: Optional[CellDecomposition] = None
    ) -> Dict[str, float]:
        """Envelope identity over every interior node."""
        cells = cells or self.decompose(family, grid, potential)
        nodes = np.nonzero(self.interior_mask(grid, cells))[0]
        worst = 0.0
        checked = 0
        if nodes.size:
            gradient, atoms, same = self._central_gradients(family, grid, potential, nodes)
            nodes, gradient, atoms = nodes[same], gradient[same], atoms[same]
            phi_x = family.phi_x(grid.nodes[nodes], potential.atoms[atoms], potential.s[atoms])
            residuals = np.max(np.abs(phi_x + gradient), axis=1) if nodes.size else np.zeros(0)
            worst = float(np.max(residuals)) if residuals.size else 0.0
            checked = int(nodes.size)
        logger.info(f"Envelope identity checked at {checked} interior nodes, max residual {worst:.3e}")
        return {"max_residual": worst, "interior_nodes": checked, "spacing": float(np.max(grid.spacing))}

    def generalized_residual(
        self,
        grid: SourceGrid,
        measure: AtomicMeasure,
        cells: CellDecomposition
    ) -> MassResidual:
        """r_j = M_j - g_j and max |r_j| / total source mass."""
        total = self.measure_service.total_mass(grid)
        residuals = cells.masses - measure.weights
        return MassResidual(residuals=residuals, max_relative=float(np.max(np.abs(residuals)) / total), total=total)

    def measure_preservation(
        self,
        grid: SourceGrid,
        measure: AtomicMeasure,
        cells: CellDecomposition
    ) -> Dict[str, Dict[str, float]]:
        """Compare sum_i w_i f_i h(T x_i) with sum_j g_j h(y_j) for polynomial test functions."""
        y = measure.atoms
        tests = {"one": np.ones(measure.count), "y1": y[:, 0], "y_squared_norm": np.sum(y * y, axis=1)}
        if y.shape[1] >= 2:
            tests["y2"] = y[:, 1]
            tests["y1_y2"] = y[:, 0] * y[:, 1]
        slack = np.sum(np.abs(cells.masses - measure.weights))
        result = {}
        for name, h in tests.items():
            pushed = float(grid.node_mass @ (cells.membership @ h))
            direct = float(measure.weights @ h)
            bound = float(slack * np.max(np.abs(h)) + 1e-12 * max(1.0, abs(direct)))
            result[name] = {"pushed": pushed, "direct": direct, "discrepancy": abs(pushed - direct), "bound": bound}
        return result

    def lipschitz_check(
        self,
        family: ConstraintFamily,
        grid: SourceGrid,
        potential: DualPotential
    ) -> Dict[str, float]:
        """Max difference quotient of u over adjacent nodes vs sup(|phi_x| + |phi_y|)."""
        rows, cols = self.measure_service.neighbor_pairs(grid)
        if rows.size == 0:
            return {"max_quotient": 0.0, "bound": 0.0, "satisfied": True}
        quotients = np.abs(potential.u[rows] - potential.u[cols]) / np.linalg.norm(
            grid.nodes[rows] - grid.nodes[cols], axis=1
        )
        x = grid.nodes[:, None, :]
        y = potential.atoms[None, :, :]
        s = potential.s[None, :]
        sizes = np.linalg.norm(family.phi_x(x, y, s), axis=-1) + np.linalg.norm(family.phi_y(x, y, s), axis=-1)
        bound = float(np.max(sizes) + 1e-8)
        worst = float(np.max(quotients))
        return {"max_quotient": worst, "bound": bound, "satisfied": bool(worst <= bound)}

    def separable_objective(
        self,
        family: ConstraintFamily,
        grid: SourceGrid,
        measure: AtomicMeasure,
        u_values: np.ndarray,
        s: np.ndarray
    ) -> float:
        """Product-convention objective sum_i w_i f_i u_i + sum_ij w_i g^_j phi(x_i, y_j, s_j), g^ = g / mass(g)."""
        branches, _ = self.branch_values(family, grid.nodes, measure.atoms, s)
        normalized = measure.weights / measure.mass
        first = float(grid.node_mass @ np.asarray(u_values, dtype=float))
        second = float(grid.weights @ (-branches) @ normalized)
        return first + second
