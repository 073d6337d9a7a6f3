"""Raytracing verification of optical potentials and Monge-Ampere residuals."""
import logging
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.spatial import cKDTree

from potentials.config.settings import settings
from potentials.families.base import ConstraintFamily
from potentials.models.geometry import AtomicMeasure, SourceGrid
from potentials.models.optics import GRADIENT_MODES, MAResidual, MapAgreement, Ray, RefractionResult, TraceReport
from potentials.models.transform import DualPotential
from potentials.services.measure_service import MeasureService
from potentials.services.transform_service import TransformService
from potentials.utils.errors import ConfigValidationError, OpticsError
from potentials.utils.helpers import lift_to_sphere

logger = logging.getLogger(__name__)

DensityFn = Callable[[np.ndarray], np.ndarray]


def _check_unit(normal: np.ndarray) -> None:
    norm = np.linalg.norm(normal, axis=-1)
    if np.any(np.abs(norm - 1.0) > 1e-12):
        raise OpticsError(f"normal must have unit length, got |normal| = {float(np.max(norm)):.15g}")


def _graph_normal(gradient: np.ndarray) -> np.ndarray:
    """Unit normal (Du, -1) / sqrt(1 + |Du|^2) of the graph z = u(x)."""
    lifted = np.concatenate([gradient, -np.ones(gradient.shape[:-1] + (1,))], axis=-1)
    return lifted / np.sqrt(1.0 + np.sum(gradient * gradient, axis=-1))[..., None]


def _radial_normal(x: np.ndarray, gradient: np.ndarray) -> np.ndarray:
    """Unit normal of the radial graph X exp(u(x)) over sphere-cap chart coordinates.

    gamma = ((Du, 0) - (1 + Du.x) X) / sqrt(1 + |Du|^2 - (Du.x)^2)
    """
    X = lift_to_sphere(x)
    along = np.sum(gradient * x, axis=-1)
    flat = np.concatenate([gradient, np.zeros(gradient.shape[:-1] + (1,))], axis=-1)
    normal = flat - (1.0 + along)[..., None] * X
    return normal / np.sqrt(1.0 + np.sum(gradient * gradient, axis=-1) - along ** 2)[..., None]


def reflect(direction: np.ndarray, normal: np.ndarray) -> np.ndarray:
    """d - 2 <d, gamma> gamma."""
    direction = np.asarray(direction, dtype=float)
    normal = np.asarray(normal, dtype=float)
    _check_unit(normal)
    return direction - 2.0 * np.sum(direction * normal, axis=-1, keepdims=True) * normal


def snell_refract(direction: np.ndarray, normal: np.ndarray, kappa: float) -> RefractionResult:
    """Vector Snell law with kappa = n_out / n_in, so sin(theta_t) = sin(theta_i) / kappa.

    Rows with total internal reflection come back as NaN (None for a single ray).
    """
    if kappa <= 0:
        raise OpticsError(f"refraction ratio must be positive, got {kappa}")
    direction = np.asarray(direction, dtype=float)
    normal = np.asarray(normal, dtype=float)
    _check_unit(normal)
    direction = direction / np.linalg.norm(direction, axis=-1, keepdims=True)
    facing = np.sum(direction * normal, axis=-1, keepdims=True)
    normal = np.where(facing > 0.0, -normal, normal)
    cosine = -np.sum(direction * normal, axis=-1, keepdims=True)
    ratio = 1.0 / kappa
    discriminant = 1.0 - ratio ** 2 * (1.0 - cosine ** 2)
    tir = discriminant[..., 0] < 0.0
    with np.errstate(invalid="ignore"):
        refracted = ratio * direction + (ratio * cosine - np.sqrt(discriminant)) * normal
    refracted = np.where(tir[..., None], np.nan, refracted)
    if direction.ndim == 1:
        return RefractionResult(direction=None if tir else refracted, total_internal_reflection=bool(tir))
    return RefractionResult(direction=refracted, total_internal_reflection=tir)


class OpticsService:
    """Service for tracing rays through optical potentials."""

    def __init__(self):
        """Initialize optics service."""
        self.transform_service = TransformService()
        self.measure_service = MeasureService()

    def ray_origins(
        self,
        grid: SourceGrid,
        rays_per_node: int = 1,
        seed: Optional[int] = None
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Chart points, source nodes and ray masses; extra rays are jittered inside the node's lattice cell."""
        if rays_per_node < 1:
            raise ConfigValidationError(f"rays per node must be at least 1, got {rays_per_node}")
        nodes = np.repeat(np.arange(grid.size), rays_per_node)
        points = grid.nodes[nodes].copy()
        if rays_per_node > 1:
            rng = np.random.default_rng(settings.default_seed if seed is None else seed)
            points += (rng.random(points.shape) - 0.5) * grid.spacing
        return points, nodes, grid.node_mass[nodes] / rays_per_node

    def surface_data(
        self,
        family: ConstraintFamily,
        potential: DualPotential,
        points: np.ndarray,
        step: np.ndarray,
        gradient_mode: str = "fd"
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Envelope value, active atom and gradient at arbitrary chart points."""
        if gradient_mode not in GRADIENT_MODES:
            raise ConfigValidationError(f"unknown gradient mode: {gradient_mode}")
        branches, gradients = self.transform_service.branch_values(family, points, potential.atoms, potential.s)
        active = np.argmin(branches, axis=1)
        u = branches[np.arange(points.shape[0]), active]
        if gradient_mode == "closed":
            return u, active, gradients[np.arange(points.shape[0]), active]

        n = points.shape[1]
        columns = []
        for k in range(n):
            shift = np.zeros(n)
            shift[k] = step[k]
            plus, _ = self.transform_service.branch_values(family, points + shift, potential.atoms, potential.s)
            minus, _ = self.transform_service.branch_values(family, points - shift, potential.atoms, potential.s)
            columns.append((plus.min(axis=1) - minus.min(axis=1)) / (2.0 * step[k]))
        return u, active, np.stack(columns, axis=-1)

    def trace(
        self,
        grid: SourceGrid,
        potential: DualPotential,
        measure: AtomicMeasure,
        rays_per_node: int = 1,
        gradient_mode: str = "fd",
        seed: Optional[int] = None
    ) -> TraceReport:
        """Dispatch on the family's declared tracer."""
        tracer = potential.family.tracer
        if tracer == "parallel-reflector":
            return self.trace_parallel_reflector(grid, potential, measure, rays_per_node, gradient_mode, seed)
        if tracer == "point-reflector":
            return self.trace_point_reflector(grid, potential, measure, rays_per_node, gradient_mode, seed)
        if tracer == "point-refractor":
            return self.trace_refractor(grid, potential, measure, "point", rays_per_node, gradient_mode, seed)
        if tracer == "parallel-refractor":
            return self.trace_refractor(grid, potential, measure, "parallel", rays_per_node, gradient_mode, seed)
        raise OpticsError(f"{potential.family.identifier} has no optical interpretation")

    def _require(self, potential: DualPotential, tracers: Tuple[str, ...]) -> ConstraintFamily:
        family = potential.family
        if family.tracer not in tracers:
            raise OpticsError(f"{family.identifier} cannot be traced as {' or '.join(tracers)}")
        return family

    def trace_parallel_reflector(
        self,
        grid: SourceGrid,
        potential: DualPotential,
        measure: AtomicMeasure,
        rays_per_node: int = 1,
        gradient_mode: str = "fd",
        seed: Optional[int] = None
    ) -> TraceReport:
        """Vertical rays reflected at (x, u(x)) onto the plane z = 0."""
        family = self._require(potential, ("parallel-reflector",))
        points, nodes, mass = self.ray_origins(grid, rays_per_node, seed)
        u, active, gradient = self.surface_data(family, potential, points, grid.spacing, gradient_mode)
        slope = np.linalg.norm(gradient, axis=1)
        if np.any(slope >= 1.0):
            k = int(np.argmax(slope))
            raise OpticsError(f"|Du| = {slope[k]:.6g} >= 1 at node {int(nodes[k])}")
        if np.any(u <= 0.0):
            k = int(np.argmin(u))
            raise OpticsError(f"u = {u[k]:.6g} <= 0 at node {int(nodes[k])}")

        origins = np.concatenate([points, u[:, None]], axis=1)
        incoming = np.zeros_like(origins)
        incoming[:, -1] = 1.0
        outgoing = reflect(incoming, _graph_normal(gradient))
        hits = Ray(origins, outgoing).intersect_plane(family.plane_height)
        return self._bin("parallel-reflector", family, grid, measure, points, nodes, mass, hits, active,
                         np.zeros(nodes.size, dtype=bool), gradient_mode)

    def trace_point_reflector(
        self,
        grid: SourceGrid,
        potential: DualPotential,
        measure: AtomicMeasure,
        rays_per_node: int = 1,
        gradient_mode: str = "fd",
        seed: Optional[int] = None
    ) -> TraceReport:
        """Rays from the origin along X reflected at X exp(u(x)) onto the plane y_{n+1} = -h."""
        family = self._require(potential, ("point-reflector",))
        points, nodes, mass = self.ray_origins(grid, rays_per_node, seed)
        u, active, gradient = self.surface_data(family, potential, points, grid.spacing, gradient_mode)
        X = lift_to_sphere(points)
        outgoing = reflect(X, _radial_normal(points, gradient))
        hits = Ray(np.exp(u)[:, None] * X, outgoing).intersect_plane(family.plane_height)
        return self._bin("point-reflector", family, grid, measure, points, nodes, mass, hits, active,
                         np.zeros(nodes.size, dtype=bool), gradient_mode)

    def trace_refractor(
        self,
        grid: SourceGrid,
        potential: DualPotential,
        measure: AtomicMeasure,
        mode: str,
        rays_per_node: int = 1,
        gradient_mode: str = "fd",
        seed: Optional[int] = None
    ) -> TraceReport:
        """Snell refraction at the lens surface onto the plane y_{n+1} = h; TIR rays count as misses."""
        if mode not in ("point", "parallel"):
            raise ConfigValidationError(f"unknown refractor mode: {mode}")
        tracer = f"{mode}-refractor"
        family = self._require(potential, (tracer,))
        points, nodes, mass = self.ray_origins(grid, rays_per_node, seed)
        u, active, gradient = self.surface_data(family, potential, points, grid.spacing, gradient_mode)
        if mode == "point":
            incoming = lift_to_sphere(points)
            origins = np.exp(u)[:, None] * incoming
            normal = _radial_normal(points, gradient)
        else:
            origins = np.concatenate([points, u[:, None]], axis=1)
            incoming = np.zeros_like(origins)
            incoming[:, -1] = 1.0
            normal = _graph_normal(gradient)
        refracted = snell_refract(incoming, normal, family.exit_ratio)
        tir = refracted.total_internal_reflection
        directions = np.where(tir[:, None], incoming, refracted.direction)
        hits = Ray(origins, directions).intersect_plane(family.plane_height)
        hits[tir] = np.nan
        if np.any(tir):
            logger.warning(f"{int(tir.sum())} rays reflected internally")
        return self._bin(tracer, family, grid, measure, points, nodes, mass, hits, active, tir, gradient_mode)

    def _bin(
        self,
        tracer: str,
        family: ConstraintFamily,
        grid: SourceGrid,
        measure: AtomicMeasure,
        points: np.ndarray,
        nodes: np.ndarray,
        mass: np.ndarray,
        hits: np.ndarray,
        active: np.ndarray,
        tir: np.ndarray,
        gradient_mode: str
    ) -> TraceReport:
        """Assign each hit to the nearest atom on the target plane and accumulate masses."""
        n = grid.dimension
        lateral = hits[:, :n]
        landed = np.all(np.isfinite(lateral), axis=1)
        atoms = np.full(nodes.size, -1, dtype=int)
        if np.any(landed):
            tree = cKDTree(measure.atoms[:, :n])
            _, nearest = tree.query(lateral[landed])
            atoms[landed] = nearest
        hit_mass = np.bincount(atoms[landed], weights=mass[landed], minlength=measure.count)
        traced = float(np.sum(mass))
        miss_mass = float(np.sum(mass[~landed]))
        report = TraceReport(
            tracer=tracer,
            origins=points,
            nodes=nodes,
            ray_mass=mass,
            hits=lateral,
            atoms=atoms,
            cell_atoms=active,
            hit_mass=hit_mass,
            target_mass=measure.weights * traced / measure.mass,
            traced_mass=traced,
            miss_mass=miss_mass,
            miss_count=int(np.sum(~landed)),
            tir_count=int(np.sum(tir)),
            gradient_mode=gradient_mode
        )
        if report.miss_count:
            logger.warning(f"{report.miss_count} of {report.ray_count} rays missed the target plane")
        logger.info(f"Traced {report.ray_count} rays ({tracer}), histogram L1 {report.histogram_l1:.3e}")
        return report

    def map_agreement(self, grid: SourceGrid, potential: DualPotential, trace: TraceReport) -> MapAgreement:
        """Cell-assigned atom vs raytraced hit on rays from interior nodes."""
        family = potential.family
        if family.tracer is None:
            raise OpticsError(f"{family.identifier} has no reflection or refraction map")
        cells = self.transform_service.decompose(family, grid, potential)
        interior = self.transform_service.interior_mask(grid, cells)[trace.nodes]
        n = grid.dimension
        assigned = potential.atoms[trace.cell_atoms[interior], :n]
        distance = np.linalg.norm(trace.hits[interior] - assigned, axis=1)
        distance = np.where(np.isfinite(distance), distance, np.inf)
        mass = trace.ray_mass[interior]
        compared = float(np.sum(mass))
        matched = float(np.sum(mass[trace.atoms[interior] == trace.cell_atoms[interior]]))
        return MapAgreement(
            max_distance=float(np.max(distance)) if distance.size else 0.0,
            match_fraction=matched / compared if compared > 0 else 1.0,
            compared_mass=compared,
            compared_rays=int(np.sum(interior)),
            half_spacing=float(0.5 * np.max(grid.spacing)),
            boundary_mass_fraction=cells.boundary_mass_fraction
        )

    def jacobian_residual(
        self,
        grid: SourceGrid,
        mapping: np.ndarray,
        f: Optional[np.ndarray] = None,
        g: Optional[DensityFn] = None
    ) -> Tuple[np.ndarray, np.ndarray]:
        """|det DT| g(T) - f with a lattice finite-difference Jacobian; returns (nodes, residuals)."""
        f = grid.density if f is None else np.asarray(f, dtype=float)
        jacobian = self.measure_service.lattice_gradient(grid, mapping)
        closed = np.all(np.isfinite(jacobian.reshape(grid.size, -1)), axis=1)
        nodes = np.nonzero(closed)[0]
        target = np.ones(nodes.size) if g is None else np.asarray(g(mapping[nodes]), dtype=float)
        residual = np.abs(np.linalg.det(jacobian[nodes])) * target - f[nodes]
        return nodes, residual

    def quadratic_cost_map(self, grid: SourceGrid, values: np.ndarray) -> np.ndarray:
        """T(x) = x - Du(x) for the cost |x - y|^2 / 2."""
        return grid.nodes - self.measure_service.lattice_gradient(grid, values)

    def reflection_map(self, grid: SourceGrid, values: np.ndarray) -> np.ndarray:
        """T(x) = x + 2 u Du / (1 - |Du|^2) for the parallel-beam reflector."""
        values = np.asarray(values, dtype=float)
        gradient = self.measure_service.lattice_gradient(grid, values)
        slope = np.sum(gradient * gradient, axis=1)
        return grid.nodes + (2.0 * values / (1.0 - slope))[:, None] * gradient

    def ma_residual_parallel(
        self,
        grid: SourceGrid,
        values: np.ndarray,
        f: Optional[np.ndarray] = None,
        g: Optional[DensityFn] = None
    ) -> MAResidual:
        """Residual of det[D^2u + (1 - |Du|^2)/(2u) I] = (1 - |Du|^2)^{n+1} / ((2u)^n (1 + |Du|^2)) f / g(T)."""
        values = np.asarray(values, dtype=float)
        f = grid.density if f is None else np.asarray(f, dtype=float)
        n = grid.dimension
        gradient = self.measure_service.lattice_gradient(grid, values)
        hessian = self.measure_service.lattice_hessian(grid, values)
        closed = np.all(np.isfinite(hessian.reshape(grid.size, -1)), axis=1) & np.all(np.isfinite(gradient), axis=1)
        nodes = np.nonzero(closed)[0]
        u = values[nodes]
        du = gradient[nodes]
        slope = np.sum(du * du, axis=1)
        if np.any(u <= 0.0):
            raise OpticsError(f"u must be positive, min u = {float(u.min()):.6g}")
        if np.any(slope >= 1.0):
            raise OpticsError(f"|Du| must stay below 1, max |Du| = {float(np.sqrt(slope.max())):.6g}")

        mapping = self.reflection_map(grid, values)
        target = np.ones(nodes.size) if g is None else np.asarray(g(mapping[nodes]), dtype=float)
        shifted = hessian[nodes] + ((1.0 - slope) / (2.0 * u))[:, None, None] * np.eye(n)
        left = np.linalg.det(shifted)
        factor = (1.0 - slope) ** (n + 1) / ((2.0 * u) ** n * (1.0 + slope))
        residual = left - factor * f[nodes] / target

        jacobian_nodes, jacobian = self.jacobian_residual(grid, mapping, f, g)
        result = MAResidual(
            nodes=nodes.tolist(),
            residual=residual.tolist(),
            jacobian_nodes=jacobian_nodes.tolist(),
            jacobian_residual=jacobian.tolist(),
            max_residual=float(np.max(np.abs(residual))) if residual.size else 0.0,
            max_jacobian_residual=float(np.max(np.abs(jacobian))) if jacobian.size else 0.0,
            spacing=float(np.max(grid.spacing))
        )
        logger.info(f"Monge-Ampere residual {result.max_residual:.3e} on {nodes.size} nodes")
        return result
