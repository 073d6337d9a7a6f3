"""Semi-discrete dual solver and discrete transport oracle."""
import itertools
import logging
import time
from typing import List, Optional, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment, linprog

from potentials.config.settings import settings
from potentials.families.base import ConstraintFamily
from potentials.models.geometry import AtomicMeasure, SourceGrid
from potentials.models.solve import OracleResult, SolveOptions, SolveReport
from potentials.models.transform import DualPotential
from potentials.services.constraint_service import ConstraintService
from potentials.services.measure_service import MeasureService
from potentials.services.transform_service import TransformService, cell_membership
from potentials.utils.errors import ConfigValidationError, OutsideDualDomain, SolveError

logger = logging.getLogger(__name__)

MAX_ORACLE_SIZE = 8


class _SweepState:
    """Branch matrix, branch gradients and weights of an ongoing solve."""

    def __init__(
        self,
        family: ConstraintFamily,
        grid: SourceGrid,
        atoms: np.ndarray,
        s: np.ndarray,
        mode: str,
        transform_service: TransformService
    ):
        self.family = family
        self.grid = grid
        self.atoms = atoms
        self.mode = mode
        self.transform_service = transform_service
        self.s = np.asarray(s, dtype=float).copy()
        self.branches, self.gradients = transform_service.branch_values(family, grid.nodes, atoms, self.s)
        self.evaluations = 0

    def column(self, j: int, value: float) -> Tuple[np.ndarray, np.ndarray]:
        b, g = self.transform_service.branch_values(
            self.family, self.grid.nodes, self.atoms[j:j + 1], np.array([value])
        )
        return b[:, 0], g[:, 0]

    def set_weight(self, j: int, value: float):
        self.branches[:, j], self.gradients[:, j] = self.column(j, value)
        self.s[j] = value

    def snapshot(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.s.copy(), self.branches.copy(), self.gradients.copy()

    def restore(self, saved: Tuple[np.ndarray, np.ndarray, np.ndarray]):
        self.s, self.branches, self.gradients = (a.copy() for a in saved)

    def masses(self) -> np.ndarray:
        membership, _, _ = cell_membership(self.branches, self.gradients, self.grid.spacing, self.mode)
        return self.grid.node_mass @ membership

    def atom_mass(self, j: int, value: float) -> float:
        """Cell mass of atom j at weight value, other weights frozen.

        Only nodes whose gap to the competing envelope lies inside the band
        where a linearized boundary can cross the lattice cell are recomputed.
        """
        self.evaluations += 1
        b, g = self.column(j, value)
        if self.branches.shape[1] == 1:
            return float(np.sum(self.grid.node_mass))
        others = np.delete(self.branches, j, axis=1)
        others_gradient = np.delete(self.gradients, j, axis=1)
        gap = b - others.min(axis=1)
        spread = np.maximum(others_gradient.max(axis=1), g) - np.minimum(others_gradient.min(axis=1), g)
        band = 0.5 * (spread @ self.grid.spacing) + 2.0 * settings.tie_tolerance
        full = gap <= -band
        partial = np.abs(gap) < band
        mass = float(np.sum(self.grid.node_mass[full]))
        if np.any(partial):
            rows = np.nonzero(partial)[0]
            branches = self.branches[rows].copy()
            gradients = self.gradients[rows].copy()
            branches[:, j] = b[rows]
            gradients[:, j] = g[rows]
            membership, _, _ = cell_membership(branches, gradients, self.grid.spacing, self.mode)
            mass += float(self.grid.node_mass[rows] @ membership[:, j])
        return mass


class SolverService:
    """Service for semi-discrete and discrete dual solves."""

    def __init__(self):
        """Initialize solver service."""
        self.measure_service = MeasureService()
        self.constraint_service = ConstraintService()
        self.transform_service = TransformService()

    def weight_limits(self, family: ConstraintFamily, grid: SourceGrid, atoms: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Interval of s_j admissible at every grid node."""
        with np.errstate(all="ignore"):
            lo, hi = family.s_bounds(grid.nodes[:, None, :], atoms[None, :, :])
        lo = np.broadcast_to(lo, (grid.size, atoms.shape[0]))
        hi = np.broadcast_to(hi, (grid.size, atoms.shape[0]))
        return np.max(lo, axis=0), np.min(hi, axis=0)

    def _clamp(self, value: float, lower: float, upper: float) -> float:
        """Keep a weight strictly inside (lower, upper)."""
        if np.isfinite(lower) and np.isfinite(upper):
            margin = 0.05 * (upper - lower)
            return float(np.clip(value, lower + margin, upper - margin))
        if np.isfinite(lower) and value <= lower:
            return float(lower + 0.5 * (abs(lower) + 1.0))
        if np.isfinite(upper) and value >= upper:
            return float(upper - 0.5 * (abs(upper) + 1.0))
        return float(value)

    def initial_weights(self, family: ConstraintFamily, grid: SourceGrid, atoms: np.ndarray) -> np.ndarray:
        """Weights putting every single-atom branch through a common height at the grid centroid."""
        centroid = grid.nodes.mean(axis=0)
        lo, hi = family.s_hint(centroid[None, :], atoms)
        middle = 0.5 * (np.asarray(lo, dtype=float) + np.asarray(hi, dtype=float))
        height = float(np.mean(-family.phi(centroid[None, :], atoms, middle)))
        s = middle.copy()
        for j in range(atoms.shape[0]):
            try:
                s[j] = float(self.constraint_service.solve_s(family, centroid, atoms[j], height))
            except OutsideDualDomain:
                logger.debug(f"Atom {j}: no branch through height {height:.4g} at the centroid, using hint midpoint")
        lower, upper = self.weight_limits(family, grid, atoms)
        return np.array([self._clamp(s[j], lower[j], upper[j]) for j in range(atoms.shape[0])])

    def _step_toward(self, value: float, step: float, lower: float, upper: float) -> float:
        """Move by step, halving the distance to a finite limit instead of crossing it."""
        target = value + step
        if step < 0 and np.isfinite(lower):
            target = max(target, lower + 0.5 * (value - lower))
        if step > 0 and np.isfinite(upper):
            target = min(target, upper - 0.5 * (upper - value))
        return target

    def _update_atom(
        self,
        state: _SweepState,
        j: int,
        target: float,
        tolerance: float,
        depth: int,
        lower: float,
        upper: float
    ) -> float:
        """Move s_j until M_j = target with the other weights frozen; returns the new M_j.

        Upward moves stop at the last iterate not exceeding the target, so
        raising one weight never pushes any non-anchor cell above its target.
        """
        a = state.s[j]
        fa = state.atom_mass(j, a) - target
        if abs(fa) <= tolerance:
            return fa + target
        direction = 1.0 if fa < 0 else -1.0
        step = direction * max(0.1 * (1.0 + abs(a)), 1e-3)
        b, fb = a, fa
        for _ in range(settings.bracket_max_expansions):
            b = self._step_toward(a, step, lower, upper)
            fb = state.atom_mass(j, b) - target
            if fb == 0.0 or np.sign(fb) != np.sign(fa):
                break
            a, fa = b, fb
            step *= 2.0
        else:
            logger.warning(f"Atom {j}: could not bracket its target mass, keeping s = {a:.6g}")
            state.set_weight(j, a)
            return fa + target

        best, best_f = (a, fa) if direction > 0 else (b, fb)
        if abs(fb) <= tolerance:
            best, best_f = b, fb
        ta, tfa, tb, tfb = a, fa, b, fb
        side = 0
        for iteration in range(depth):
            if abs(best_f) <= tolerance or abs(tb - ta) <= 4.0 * np.finfo(float).eps * max(1.0, abs(ta)):
                break
            c = (ta * tfb - tb * tfa) / (tfb - tfa) if tfb != tfa else 0.5 * (ta + tb)
            if iteration % 3 == 2 or not (min(ta, tb) < c < max(ta, tb)):
                c = 0.5 * (ta + tb)
            fc = state.atom_mass(j, c) - target
            if abs(fc) <= tolerance or (direction > 0 and fc < 0 and fc > best_f) or (
                direction < 0 and abs(fc) < abs(best_f)
            ):
                best, best_f = c, fc
            if fc * tfb > 0:
                tb, tfb = c, fc
                if side == -1:
                    tfa *= 0.5
                side = -1
            else:
                ta, tfa = c, fc
                if side == 1:
                    tfb *= 0.5
                side = 1
        state.set_weight(j, best)
        logger.debug(f"Atom {j}: s = {best:.10g}, mass residual {best_f:.3e}")
        return best_f + target

    def _newton_step(
        self,
        state: _SweepState,
        targets: np.ndarray,
        free: np.ndarray,
        lower: np.ndarray,
        upper: np.ndarray
    ) -> bool:
        """Damped Newton step on the free weights with a finite-difference Jacobian."""
        base = state.masses()
        residual = base - targets
        jacobian = np.zeros((free.size, free.size))
        saved = state.snapshot()
        for column, k in enumerate(free):
            eps = 1e-7 * (1.0 + abs(state.s[k]))
            state.set_weight(k, state.s[k] + eps)
            jacobian[:, column] = (state.masses()[free] - base[free]) / eps
            state.restore(saved)
        delta = np.linalg.lstsq(jacobian, -residual[free], rcond=None)[0]
        current = np.max(np.abs(residual))
        scale = 1.0
        for _ in range(30):
            trial = saved[0][free] + scale * delta
            inside = np.all((trial > lower[free]) & (trial < upper[free]))
            if inside:
                for k, value in zip(free, trial):
                    state.set_weight(int(k), float(value))
                if np.max(np.abs(state.masses() - targets)) < current:
                    return True
                state.restore(saved)
            scale *= 0.5
        return False

    def solve_semidiscrete(
        self,
        family: ConstraintFamily,
        grid: SourceGrid,
        measure: AtomicMeasure,
        options: Optional[SolveOptions] = None
    ) -> Tuple[DualPotential, SolveReport]:
        """Dual weights whose cell masses match the atomic target."""
        options = options or SolveOptions()
        started = time.perf_counter()
        balance = self.measure_service.balance_check(grid, measure, 1e-3)
        if not balance.balanced:
            raise SolveError(f"measures are not balanced: deficit {balance.deficit:.6g}")
        count = measure.count
        if options.anchor >= count:
            raise ConfigValidationError(f"anchor {options.anchor} out of range for {count} atoms")

        total = balance.source_mass
        targets = measure.weights * (total / balance.target_mass)
        atoms = measure.atoms
        mode = options.membership or settings.cell_membership
        tolerance = options.tol_mass * total
        inner = 1e-12 * total
        lower, upper = self.weight_limits(family, grid, atoms)
        free = np.array([j for j in range(count) if j != options.anchor], dtype=int)

        state = _SweepState(family, grid, atoms, self.initial_weights(family, grid, atoms), mode, self.transform_service)
        masses = state.masses()

        shift = 1.0
        for _ in range(100):
            if free.size == 0 or np.all(masses[free] <= targets[free] + inner):
                break
            for j in free:
                state.set_weight(int(j), self._step_toward(state.s[j], -shift, lower[j], upper[j]))
            masses = state.masses()
            shift *= 2.0
        else:
            logger.warning("Could not lower every non-anchor cell below its target mass")

        history: List[float] = []
        totals: List[float] = []
        sweeps = 0
        newton_steps = 0
        while sweeps < options.max_sweeps and np.max(np.abs(masses - targets)) > tolerance:
            sweeps += 1
            for j in free:
                self._update_atom(state, int(j), targets[j], inner, options.bisection_depth, lower[j], upper[j])
            if options.newton and self._newton_step(state, targets, free, lower, upper):
                newton_steps += 1
            masses = state.masses()
            deficits = targets[free] - masses[free]
            history.append(float(np.max(deficits)) if deficits.size else 0.0)
            totals.append(float(np.sum(deficits)))
            logger.debug(f"Sweep {sweeps}: max atom deficit {history[-1]:.3e}, total deficit {totals[-1]:.3e}")

        converged = bool(np.max(np.abs(masses - targets)) <= tolerance)
        if converged:
            logger.info(f"{family.identifier}: converged after {sweeps} sweeps ({state.evaluations} mass evaluations)")
        else:
            logger.warning(f"{family.identifier}: no convergence within {options.max_sweeps} sweeps")

        normalized = AtomicMeasure(atoms=atoms, weights=targets)
        potential = self.transform_service.build_potential(family, grid, atoms, state.s)
        cells = self.transform_service.decompose(family, grid, potential, mode)
        residual = self.transform_service.generalized_residual(grid, normalized, cells)
        tightened = self.transform_service.tighten(family, grid, potential.u, atoms, potential.s)
        objective = self.transform_service.separable_objective(family, grid, normalized, potential.u, potential.s)

        report = SolveReport(
            family=family.identifier,
            s=potential.s.tolist(),
            masses=cells.masses.tolist(),
            targets=targets.tolist(),
            residuals=residual.residuals.tolist(),
            max_relative_residual=residual.max_relative,
            sweeps=sweeps,
            converged=converged,
            objective=objective,
            dual_pair_residual=tightened.dual_pair_residual,
            tighten_shift=float(np.max(np.abs(tightened.s - potential.s))),
            deficit_history=history,
            total_deficit_history=totals,
            anchor=options.anchor,
            newton_steps=newton_steps,
            wall_clock=time.perf_counter() - started
        )
        return potential, report

    def cell_mass_curve(
        self,
        family: ConstraintFamily,
        grid: SourceGrid,
        potential: DualPotential,
        atom: int,
        samples,
        mode: Optional[str] = None
    ) -> np.ndarray:
        """M_j(s) with the other weights frozen."""
        state = _SweepState(
            family, grid, potential.atoms, potential.s, mode or settings.cell_membership, self.transform_service
        )
        return np.array([state.atom_mass(atom, float(value)) for value in np.asarray(samples, dtype=float)])

    def solve_discrete(
        self,
        cost: np.ndarray,
        source_weights: np.ndarray,
        target_weights: np.ndarray
    ) -> Tuple[float, np.ndarray, np.ndarray]:
        """Kantorovich dual: max sum a_i u_i + sum b_j v_j subject to u_i + v_j <= c_ij."""
        cost = np.asarray(cost, dtype=float)
        rows, cols = cost.shape
        constraints = np.zeros((rows * cols, rows + cols))
        for i in range(rows):
            for j in range(cols):
                constraints[i * cols + j, i] = 1.0
                constraints[i * cols + j, rows + j] = 1.0
        objective = -np.concatenate([np.asarray(source_weights, dtype=float), np.asarray(target_weights, dtype=float)])
        try:
            result = linprog(
                objective,
                A_ub=constraints,
                b_ub=cost.ravel(),
                bounds=[(None, None)] * (rows + cols),
                method="highs"
            )
        except Exception as e:
            logger.error(f"Error solving discrete dual: {e}")
            raise
        if not result.success:
            raise SolveError(f"discrete dual LP failed: {result.message}")
        return float(-result.fun), result.x[:rows], result.x[rows:]

    def discrete_oracle_ot(self, cost: np.ndarray) -> OracleResult:
        """Exhaustive assignment search against the LP dual for unit masses."""
        cost = np.atleast_2d(np.asarray(cost, dtype=float))
        size = cost.shape[0]
        if cost.shape[0] != cost.shape[1]:
            raise ConfigValidationError(f"cost matrix must be square, got {cost.shape}")
        if size > MAX_ORACLE_SIZE:
            raise ConfigValidationError(f"brute-force oracle supports N <= {MAX_ORACLE_SIZE}, got {size}")

        best_value, best_assignment = np.inf, None
        for permutation in itertools.permutations(range(size)):
            value = float(cost[np.arange(size), permutation].sum())
            if value < best_value:
                best_value, best_assignment = value, permutation
        row, col = linear_sum_assignment(cost)
        check = float(cost[row, col].sum())
        if abs(check - best_value) > 1e-9 * max(1.0, abs(best_value)):
            logger.warning(f"Assignment cross-check differs: brute force {best_value}, Hungarian {check}")

        ones = np.ones(size)
        dual_value, u, v = self.solve_discrete(cost, ones, ones)
        return OracleResult(
            size=size,
            primal_value=best_value,
            assignment=list(best_assignment),
            assignment_check_value=check,
            dual_value=dual_value,
            u=u.tolist(),
            v=v.tolist(),
            gap=best_value - dual_value
        )
