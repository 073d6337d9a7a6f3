"""Tests for grids, densities and measures."""
import math

import numpy as np
import pytest

from potentials.models.geometry import AtomicMeasure, ChartKind, DensityKind, DensitySpec, SourceChart
from potentials.services.measure_service import MeasureService
from potentials.utils.errors import ConfigValidationError


@pytest.fixture
def measure_service():
    """Create measure service instance."""
    return MeasureService()


@pytest.fixture
def unit_box():
    """Unit square chart."""
    return SourceChart(kind=ChartKind.BOX, dimension=2, lower=[0.0, 0.0], upper=[1.0, 1.0])


class TestBuildGrid:
    """Tests for lattice construction."""

    def test_box_midpoints(self, measure_service, unit_box):
        """Box with 10 cells per unit has 100 midpoint nodes of weight 0.01."""
        grid = measure_service.build_grid(unit_box, 10)

        assert grid.size == 100
        assert np.allclose(grid.weights, 0.01)
        assert np.isclose(grid.mass, 1.0)
        assert np.isclose(grid.nodes.min(), 0.05)

    def test_resolution_too_small(self, measure_service, unit_box):
        """Resolution below 2 is rejected."""
        with pytest.raises(ConfigValidationError):
            measure_service.build_grid(unit_box, 1)

    def test_disk_measure(self, measure_service):
        """Unit-disk quadrature approaches pi."""
        chart = SourceChart(kind=ChartKind.DISK, dimension=2, radius=1.0)
        grid = measure_service.build_grid(chart, 200)

        assert abs(grid.mass - math.pi) / math.pi < 1e-2

    def test_sphere_cap_measure(self, measure_service):
        """Cap weights dx / omega(x) integrate to the cap area."""
        chart = SourceChart(kind=ChartKind.SPHERE_CAP, dimension=2, radius=0.5)
        grid = measure_service.build_grid(chart, 200)
        exact = chart.analytic_measure()

        assert np.isclose(exact, 2.0 * math.pi * (1.0 - math.sqrt(0.75)))
        assert abs(grid.mass - exact) / exact < 1e-2

    def test_interval_chart(self, measure_service):
        """One-dimensional box charts are supported."""
        chart = SourceChart(kind=ChartKind.BOX, dimension=1, lower=[0.0], upper=[2.0])
        grid = measure_service.build_grid(chart, 5)

        assert grid.size == 10
        assert np.isclose(grid.mass, 2.0)

    def test_cap_radius_validated(self):
        """Sphere-cap charts need a radius below 1."""
        with pytest.raises(ValueError):
            SourceChart(kind=ChartKind.SPHERE_CAP, dimension=2, radius=1.2)


class TestDensities:
    """Tests for the density catalog."""

    def test_linear_density_mass(self, measure_service, unit_box):
        """f = x1 on the unit square has mass 1/2."""
        spec = DensitySpec(kind=DensityKind.EXPR, name="linear")
        grid = measure_service.build_grid(unit_box, 20, spec)

        assert np.isclose(grid.mass, 0.5)

    def test_gaussian_density(self, measure_service, unit_box):
        """Gaussian density peaks at its center."""
        spec = DensitySpec(kind=DensityKind.EXPR, name="gaussian", params={"center": [0.5, 0.5], "width": 0.3})
        grid = measure_service.build_grid(unit_box, 10, spec)
        peak = np.argmax(grid.density)

        assert np.linalg.norm(grid.nodes[peak] - 0.5) < 0.1

    def test_midpoint_rule_order(self, measure_service, unit_box):
        """Halving the spacing cuts the quadrature error at least threefold; linear densities are exact."""
        linear = DensitySpec(kind=DensityKind.EXPR, name="linear")
        gaussian = DensitySpec(kind=DensityKind.EXPR, name="gaussian")
        exact = (0.5 * math.sqrt(math.pi) * math.erf(1.0)) ** 2
        errors = []
        for resolution in (10, 20, 40):
            assert measure_service.build_grid(unit_box, resolution, linear).mass == pytest.approx(0.5, abs=1e-12)
            errors.append(abs(measure_service.build_grid(unit_box, resolution, gaussian).mass - exact))

        assert errors[0] / errors[1] >= 3.0
        assert errors[1] / errors[2] >= 3.0

    def test_unknown_density(self, measure_service, unit_box):
        """Unknown density names are rejected."""
        spec = DensitySpec(kind=DensityKind.EXPR, name="sawtooth")
        with pytest.raises(ConfigValidationError):
            measure_service.build_grid(unit_box, 10, spec)

    def test_negative_density(self, measure_service, unit_box):
        """Densities with negative values are rejected."""
        spec = DensitySpec(kind=DensityKind.EXPR, name="linear", params={"offset": -1.0})
        with pytest.raises(ConfigValidationError):
            measure_service.build_grid(unit_box, 10, spec)


class TestMeasures:
    """Tests for atomic measures and balance."""

    def test_balance_check(self, measure_service, unit_box):
        """Deficit is source minus target mass."""
        grid = measure_service.build_grid(unit_box, 10)
        measure = measure_service.build_measure([[0.2, 0.2], [0.8, 0.8]], [0.4, 0.5])
        result = measure_service.balance_check(grid, measure, 1e-6)

        assert not result.balanced
        assert np.isclose(result.deficit, 0.1)

    def test_total_mass(self, measure_service, unit_box):
        """Grid mass is the quadrature sum, measure mass the weight sum."""
        grid = measure_service.build_grid(unit_box, 10)
        measure = measure_service.build_measure([[0.2, 0.2], [0.8, 0.8]], [0.25, 0.5])

        assert measure_service.total_mass(grid) == pytest.approx(1.0)
        assert measure_service.total_mass(measure) == pytest.approx(0.75)

    def test_balanced_measure(self, measure_service, unit_box):
        """Equal masses balance."""
        grid = measure_service.build_grid(unit_box, 10)
        measure = measure_service.build_measure([[0.2, 0.2], [0.8, 0.8]], [0.5, 0.5])

        assert measure_service.balance_check(grid, measure, 1e-9).balanced

    def test_duplicate_atoms(self):
        """Atoms must be pairwise distinct."""
        with pytest.raises(ConfigValidationError):
            AtomicMeasure(atoms=[[0.1, 0.1], [0.1, 0.1]], weights=[1.0, 1.0])

    def test_nonpositive_weights(self):
        """Target weights must be positive."""
        with pytest.raises(ConfigValidationError):
            AtomicMeasure(atoms=[[0.1, 0.1], [0.2, 0.1]], weights=[1.0, 0.0])


class TestLatticeOperators:
    """Tests for lattice finite differences."""

    def test_gradient_of_linear_function(self, measure_service, unit_box):
        """Central differences are exact for linear functions; NaN on the lattice edge."""
        grid = measure_service.build_grid(unit_box, 10)
        values = 2.0 * grid.nodes[:, 0] - grid.nodes[:, 1]
        gradient = measure_service.lattice_gradient(grid, values)
        inside = np.all(np.isfinite(gradient), axis=1)

        assert np.allclose(gradient[inside], [2.0, -1.0])
        assert not inside.all()

    def test_hessian_mixed_term(self, measure_service, unit_box):
        """Diagonal stencil recovers d2(x1 x2)/dx1 dx2 = 1."""
        grid = measure_service.build_grid(unit_box, 10)
        values = grid.nodes[:, 0] * grid.nodes[:, 1]
        hessian = measure_service.lattice_hessian(grid, values)
        inside = np.all(np.isfinite(hessian.reshape(grid.size, -1)), axis=1)

        assert np.allclose(hessian[inside][:, 0, 1], 1.0)
        assert np.allclose(hessian[inside][:, 0, 0], 0.0, atol=1e-9)

    def test_neighbor_pairs(self, measure_service, unit_box):
        """A 10 x 10 lattice has 180 axis-adjacent pairs."""
        grid = measure_service.build_grid(unit_box, 10)
        rows, cols = measure_service.neighbor_pairs(grid)

        assert rows.size == 180
        assert np.allclose(np.linalg.norm(grid.nodes[rows] - grid.nodes[cols], axis=1), 0.1)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
