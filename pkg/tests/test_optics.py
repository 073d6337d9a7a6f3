"""Tests for reflection, refraction, raytracing and Monge-Ampere residuals."""
import math

import numpy as np
import pytest

from potentials.models.catalog import CatalogEntry, FamilyId
from potentials.models.geometry import ChartKind, SourceChart
from potentials.models.optics import Ray
from potentials.services.catalog_service import CatalogService
from potentials.services.measure_service import MeasureService
from potentials.services.optics_service import OpticsService, reflect, snell_refract
from potentials.services.solver_service import SolverService
from potentials.utils.errors import ConfigValidationError, OpticsError, ValidityError


@pytest.fixture
def optics_service():
    """Create optics service instance."""
    return OpticsService()


@pytest.fixture
def measure_service():
    """Create measure service instance."""
    return MeasureService()


@pytest.fixture
def catalog_service():
    """Create catalog service instance."""
    return CatalogService()


@pytest.fixture
def disk_grid(measure_service):
    """Disk of radius 0.3 at resolution 40."""
    return measure_service.build_grid(SourceChart(kind=ChartKind.DISK, dimension=2, radius=0.3), 40)


@pytest.fixture
def cap_grid(measure_service):
    """Sphere cap of chart radius 0.3 at resolution 40."""
    return measure_service.build_grid(SourceChart(kind=ChartKind.SPHERE_CAP, dimension=2, radius=0.3), 40)


def _solve(family, grid, points, weights=None):
    measure_service = MeasureService()
    atoms = family.embed_target(np.atleast_2d(np.asarray(points, dtype=float)))
    weights = np.ones(atoms.shape[0]) if weights is None else np.asarray(weights, dtype=float)
    measure = measure_service.build_measure(atoms, weights * grid.mass / weights.sum())
    potential, report = SolverService().solve_semidiscrete(family, grid, measure)
    assert report.converged
    return potential, measure


def _max_miss(trace, target):
    return float(np.max(np.linalg.norm(trace.hits - np.asarray(target)[None, :], axis=1)))


class TestReflect:
    """Tests for mirror reflection."""

    def test_normal_incidence(self):
        """A ray hitting a mirror head-on comes straight back."""
        out = reflect(np.array([0.0, 0.0, 1.0]), np.array([0.0, 0.0, -1.0]))

        assert np.allclose(out, [0.0, 0.0, -1.0])

    def test_oblique_mirror(self):
        """A 45 degree mirror turns a vertical ray horizontal."""
        normal = np.array([1.0, 0.0, -1.0]) / math.sqrt(2.0)
        out = reflect(np.array([0.0, 0.0, 1.0]), normal)

        assert np.allclose(out, [1.0, 0.0, 0.0])

    def test_non_unit_normal(self):
        """Normals must be unit vectors."""
        with pytest.raises(OpticsError):
            reflect(np.array([0.0, 0.0, 1.0]), np.array([0.0, 0.0, 2.0]))

    def test_angle_preserved(self):
        """Angle of incidence equals angle of reflection."""
        rng = np.random.default_rng(0)
        directions = rng.standard_normal((20, 3))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        normals = rng.standard_normal((20, 3))
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        out = reflect(directions, normals)

        assert np.allclose(np.sum(out * normals, axis=1), -np.sum(directions * normals, axis=1))
        assert np.allclose(np.linalg.norm(out, axis=1), 1.0)


class TestSnell:
    """Tests for vector Snell refraction."""

    def test_normal_incidence(self):
        """Normal rays pass straight through."""
        result = snell_refract(np.array([0.0, 0.0, 1.0]), np.array([0.0, 0.0, 1.0]), 1.5)

        assert np.allclose(result.direction, [0.0, 0.0, 1.0])
        assert not result.total_internal_reflection

    def test_matched_media(self):
        """kappa = 1 leaves every direction unchanged."""
        d = np.array([0.3, 0.1, 0.9])
        d /= np.linalg.norm(d)
        result = snell_refract(d, np.array([0.0, 0.0, -1.0]), 1.0)

        assert np.allclose(result.direction, d)

    def test_bending_toward_normal(self):
        """30 degrees into a 1.5 times denser medium leaves at asin(1/3)."""
        d = np.array([math.sin(math.radians(30.0)), 0.0, math.cos(math.radians(30.0))])
        result = snell_refract(d, np.array([0.0, 0.0, -1.0]), 1.5)
        angle = math.degrees(math.acos(result.direction[2]))

        assert angle == pytest.approx(19.4712, abs=1e-3)

    def test_total_internal_reflection(self):
        """60 degrees into a half as dense medium reflects internally."""
        d = np.array([math.sin(math.radians(60.0)), 0.0, math.cos(math.radians(60.0))])
        result = snell_refract(d, np.array([0.0, 0.0, -1.0]), 0.5)

        assert result.total_internal_reflection
        assert result.direction is None

    def test_batch_marks_tir_rows(self):
        """Batches return NaN rows where refraction fails."""
        d = np.array([[0.0, 0.0, 1.0], [math.sin(1.2), 0.0, math.cos(1.2)]])
        result = snell_refract(d, np.array([[0.0, 0.0, -1.0]] * 2), 0.5)

        assert list(result.total_internal_reflection) == [False, True]
        assert np.all(np.isnan(result.direction[1]))

    def test_nonpositive_ratio(self):
        """Refraction ratios must be positive."""
        with pytest.raises(OpticsError):
            snell_refract(np.array([0.0, 0.0, 1.0]), np.array([0.0, 0.0, 1.0]), 0.0)


class TestRays:
    """Tests for ray construction and plane intersection."""

    def test_horizontal_ray_misses(self):
        """Rays parallel to the plane never reach it."""
        hit = Ray(np.zeros(3), np.array([1.0, 0.0, 0.0])).intersect_plane(1.0)

        assert np.all(np.isnan(hit))

    def test_backward_ray_misses(self):
        """Planes behind the ray are not hit."""
        hit = Ray(np.zeros(3), np.array([0.0, 0.0, 1.0])).intersect_plane(-1.0)

        assert np.all(np.isnan(hit))

    def test_zero_direction(self):
        """Zero directions are rejected."""
        with pytest.raises(OpticsError):
            Ray(np.zeros(3), np.zeros(3))

    def test_ray_origins(self, optics_service, disk_grid):
        """Jittered rays split node mass evenly; zero rays are rejected."""
        points, nodes, mass = optics_service.ray_origins(disk_grid, 3, seed=1)

        assert points.shape == (3 * disk_grid.size, 2)
        assert np.isclose(mass.sum(), disk_grid.mass)
        with pytest.raises(ConfigValidationError):
            optics_service.ray_origins(disk_grid, 0)


class TestSingleAtomFocusing:
    """A single supporting surface sends every ray to its atom."""

    def test_paraboloid(self, optics_service, catalog_service, disk_grid):
        """Parallel rays focus at the paraboloid's focus."""
        family = catalog_service.make_family(CatalogEntry(identifier=FamilyId.REFLECTOR_NF_PARALLEL))
        potential, measure = _solve(family, disk_grid, [[0.0, 0.0]])

        for mode in ("closed", "fd"):
            trace = optics_service.trace(disk_grid, potential, measure, gradient_mode=mode)
            assert _max_miss(trace, [0.0, 0.0]) <= 1e-9
            assert trace.histogram_l1 <= 1e-12
            assert trace.energy_defect <= 1e-12

    def test_ellipsoid(self, optics_service, catalog_service, cap_grid):
        """Rays from one focus of an ellipsoid meet at the other."""
        family = catalog_service.make_family(CatalogEntry(identifier=FamilyId.REFLECTOR_NF_POINT))
        potential, measure = _solve(family, cap_grid, [[0.2, 0.1]])
        h = float(np.max(cap_grid.spacing))

        closed = optics_service.trace(cap_grid, potential, measure, gradient_mode="closed")
        fd = optics_service.trace(cap_grid, potential, measure, gradient_mode="fd")

        assert _max_miss(closed, [0.2, 0.1]) <= 1e-6
        assert _max_miss(fd, [0.2, 0.1]) <= 10.0 * h ** 2
        assert closed.miss_count == 0

    def test_cartesian_oval(self, optics_service, catalog_service, cap_grid):
        """Point-source refraction through an oval focuses at the target point."""
        family = catalog_service.make_family(CatalogEntry(identifier=FamilyId.REFRACTOR_NF_POINT))
        potential, measure = _solve(family, cap_grid, [[0.1, 0.0]])
        trace = optics_service.trace(cap_grid, potential, measure, gradient_mode="closed")

        assert trace.tir_count == 0
        assert _max_miss(trace, [0.1, 0.0]) <= 1e-6

    def test_inverse_ellipsoid(self, optics_service, catalog_service, disk_grid):
        """Parallel refraction through an inverse ellipsoid focuses at the target point."""
        family = catalog_service.make_family(CatalogEntry(identifier=FamilyId.REFRACTOR_NF_PARALLEL))
        potential, measure = _solve(family, disk_grid, [[0.1, 0.0]])
        trace = optics_service.trace(disk_grid, potential, measure, gradient_mode="closed")

        assert _max_miss(trace, [0.1, 0.0]) <= 1e-6


class TestTracePreconditions:
    """Tests for invalid optical configurations."""

    def test_steep_reflector(self, optics_service, catalog_service, disk_grid, measure_service):
        """|Du| >= 1 sends rays away from the plane and is rejected."""
        family = catalog_service.make_family(CatalogEntry(identifier=FamilyId.REFLECTOR_NF_PARALLEL))
        atoms = np.zeros((1, 2))
        potential = optics_service.transform_service.build_potential(family, disk_grid, atoms, np.array([5.0]))
        measure = measure_service.build_measure(atoms, [disk_grid.mass])

        with pytest.raises(OpticsError):
            optics_service.trace(disk_grid, potential, measure, gradient_mode="closed")

    def test_refractor_margin_excludes_everything(self, optics_service, catalog_service, cap_grid):
        """A margin tau pushing the cosine bound above 1 leaves no valid branch."""
        family = catalog_service.make_family(CatalogEntry(identifier=FamilyId.REFRACTOR_NF_POINT, tau=0.5))
        atoms = family.embed_target(np.array([[0.0, 0.0]]))

        with pytest.raises(ValidityError):
            optics_service.transform_service.build_potential(family, cap_grid, atoms, np.array([0.2]))

    def test_transport_family_not_traceable(self, optics_service, catalog_service, disk_grid, measure_service):
        """Pure transport costs have no optical map."""
        family = catalog_service.make_family(CatalogEntry(identifier=FamilyId.OT_COST))
        atoms = np.array([[0.0, 0.0]])
        potential = optics_service.transform_service.build_potential(family, disk_grid, atoms, np.zeros(1))
        measure = measure_service.build_measure(atoms, [disk_grid.mass])

        with pytest.raises(OpticsError):
            optics_service.trace(disk_grid, potential, measure)

    def test_unknown_gradient_mode(self, optics_service, catalog_service, disk_grid):
        """Only fd and closed gradients are supported."""
        family = catalog_service.make_family(CatalogEntry(identifier=FamilyId.REFLECTOR_NF_PARALLEL))
        potential, measure = _solve(family, disk_grid, [[0.0, 0.0]])

        with pytest.raises(ConfigValidationError):
            optics_service.trace(disk_grid, potential, measure, gradient_mode="spectral")


class TestMapAgreement:
    """Tests comparing cell assignment with raytraced hits."""

    def test_single_atom(self, optics_service, catalog_service, disk_grid):
        """Every interior ray lands on the only atom."""
        family = catalog_service.make_family(CatalogEntry(identifier=FamilyId.REFLECTOR_NF_PARALLEL))
        potential, measure = _solve(family, disk_grid, [[0.0, 0.0]])
        trace = optics_service.trace(disk_grid, potential, measure)
        agreement = optics_service.map_agreement(disk_grid, potential, trace)

        assert agreement.compared_rays > 0
        assert agreement.match_fraction == pytest.approx(1.0)
        assert agreement.max_distance <= 1e-9

    def test_two_atoms(self, optics_service, catalog_service, disk_grid):
        """Interior rays land on their cell's atom; mismatches stay near the boundary."""
        family = catalog_service.make_family(CatalogEntry(identifier=FamilyId.REFLECTOR_NF_PARALLEL))
        potential, measure = _solve(family, disk_grid, [[-0.1, 0.0], [0.1, 0.0]])
        trace = optics_service.trace(disk_grid, potential, measure)
        agreement = optics_service.map_agreement(disk_grid, potential, trace)

        assert agreement.compared_rays > 0
        assert 0.0 < agreement.boundary_mass_fraction < 0.5
        assert agreement.match_fraction >= 1.0 - agreement.boundary_mass_fraction - 1e-12
        assert agreement.max_distance <= 1e-6
        assert trace.energy_defect <= 1e-12


def _exp_profile(x):
    """u = 0.5 + 0.2 exp(-|x|^2) with its gradient and Hessian."""
    r2 = np.sum(x * x, axis=1)
    e = np.exp(-r2)
    u = 0.5 + 0.2 * e
    gradient = -0.4 * e[:, None] * x
    hessian = 0.2 * e[:, None, None] * (-2.0 * np.eye(2) + 4.0 * x[:, :, None] * x[:, None, :])
    return u, gradient, hessian


def _quadratic_profile(x):
    """u = 0.4 - 0.3 |x|^2 with its gradient and Hessian."""
    u = 0.4 - 0.3 * np.sum(x * x, axis=1)
    gradient = -0.6 * x
    hessian = np.broadcast_to(-0.6 * np.eye(2), (x.shape[0], 2, 2))
    return u, gradient, hessian


def _matching_density(profile, x):
    """Source density for which u solves the reflector equation with a uniform target."""
    u, gradient, hessian = profile(x)
    slope = np.sum(gradient * gradient, axis=1)
    left = np.linalg.det(hessian + ((1.0 - slope) / (2.0 * u))[:, None, None] * np.eye(2))
    factor = (1.0 - slope) ** 3 / ((2.0 * u) ** 2 * (1.0 + slope))
    return left / factor


class TestMongeAmpere:
    """Tests for the finite-difference Monge-Ampere residuals."""

    @pytest.fixture
    def box(self):
        """Square [-0.3, 0.3]^2."""
        return SourceChart(kind=ChartKind.BOX, dimension=2, lower=[-0.3, -0.3], upper=[0.3, 0.3])

    def test_quadratic_potential_exact(self, optics_service, measure_service, box):
        """Finite differences are exact for quadratics, so the equation residual vanishes."""
        grid = measure_service.build_grid(box, 20)
        values, _, _ = _quadratic_profile(grid.nodes)
        result = optics_service.ma_residual_parallel(grid, values, f=_matching_density(_quadratic_profile, grid.nodes))

        assert result.max_residual <= 1e-9
        assert len(result.nodes) > 0

    def test_second_order_convergence(self, optics_service, measure_service, box):
        """Both residuals shrink by about four when the spacing halves."""
        results = []
        for resolution in (20, 40):
            grid = measure_service.build_grid(box, resolution)
            values, _, _ = _exp_profile(grid.nodes)
            results.append(
                optics_service.ma_residual_parallel(grid, values, f=_matching_density(_exp_profile, grid.nodes))
            )
        coarse, fine = results

        assert coarse.max_residual / fine.max_residual >= 3.0
        assert coarse.max_jacobian_residual / fine.max_jacobian_residual >= 3.0

    def test_invalid_slope(self, optics_service, measure_service, box):
        """|Du| >= 1 has no reflector interpretation."""
        grid = measure_service.build_grid(box, 20)
        values = 1.0 + 5.0 * grid.nodes[:, 0]

        with pytest.raises(OpticsError):
            optics_service.ma_residual_parallel(grid, values)

    def test_quadratic_cost_identity(self, optics_service, measure_service, box):
        """u = 0 is the identity map with unit Jacobian."""
        grid = measure_service.build_grid(box, 20)
        mapping = optics_service.quadratic_cost_map(grid, np.zeros(grid.size))
        nodes, residual = optics_service.jacobian_residual(grid, mapping)

        assert nodes.size > 0
        assert np.allclose(mapping[nodes], grid.nodes[nodes])
        assert np.max(np.abs(residual)) <= 1e-12

    def test_quadratic_cost_contraction(self, optics_service, measure_service, box):
        """u = |x|^2/4 gives T = x/2 with Jacobian 1/4."""
        grid = measure_service.build_grid(box, 20)
        values = 0.25 * np.sum(grid.nodes ** 2, axis=1)
        mapping = optics_service.quadratic_cost_map(grid, values)
        nodes, residual = optics_service.jacobian_residual(grid, mapping, f=np.full(grid.size, 0.25))

        assert np.allclose(mapping[nodes], 0.5 * grid.nodes[nodes])
        assert np.max(np.abs(residual)) <= 1e-9


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
