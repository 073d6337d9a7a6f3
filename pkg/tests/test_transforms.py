"""Tests for conjugation, cells and the generalized solution checks."""
import numpy as np
import pytest

from potentials.models.catalog import CatalogEntry, FamilyId
from potentials.models.geometry import ChartKind, DensityKind, DensitySpec, SourceChart
from potentials.services.catalog_service import CatalogService
from potentials.services.measure_service import MeasureService
from potentials.services.solver_service import SolverService
from potentials.services.transform_service import TransformService, cell_membership
from potentials.utils.errors import NondifferentiablePoint, ValidityError

ATOMS = np.array([[0.25, 0.5], [0.75, 0.5]])


@pytest.fixture
def transform_service():
    """Create transform service instance."""
    return TransformService()


@pytest.fixture
def grid():
    """10 x 10 midpoint lattice on the unit square."""
    chart = SourceChart(kind=ChartKind.BOX, dimension=2, lower=[0.0, 0.0], upper=[1.0, 1.0])
    return MeasureService().build_grid(chart, 10)


@pytest.fixture
def quadratic_ot():
    """Quadratic-cost transport family."""
    return CatalogService().make_family(CatalogEntry(identifier=FamilyId.OT_COST))


def _node(grid, point):
    return int(np.argmin(np.linalg.norm(grid.nodes - np.asarray(point), axis=1)))


def _family_grid(family):
    """Sphere cap for point-source and far-field families, disk otherwise."""
    if family.identifier.endswith("-point") or family.identifier.endswith("-ff"):
        chart = SourceChart(kind=ChartKind.SPHERE_CAP, dimension=2, radius=0.3)
    else:
        chart = SourceChart(kind=ChartKind.DISK, dimension=2, radius=0.3)
    return MeasureService().build_grid(chart, 20)


class TestCellMembership:
    """Tests for the fractional and nodal membership rules."""

    def test_partial_share(self):
        """Gap 0.05 over a linearized width 0.2 gives the second branch a quarter."""
        membership, active, boundary = cell_membership(
            np.array([[0.0, 0.05]]), np.array([[[1.0, 0.0], [-1.0, 0.0]]]), np.array([0.1, 0.1])
        )

        assert np.allclose(membership, [[0.75, 0.25]])
        assert active[0] == 0
        assert boundary[0]

    def test_clear_winner(self):
        """A gap of half the width leaves the node entirely in the active cell."""
        membership, _, boundary = cell_membership(
            np.array([[0.0, 0.1]]), np.array([[[1.0, 0.0], [-1.0, 0.0]]]), np.array([0.1, 0.1])
        )

        assert np.allclose(membership, [[1.0, 0.0]])
        assert not boundary[0]

    def test_tie_goes_to_lowest_index(self):
        """Exact ties pick the lowest index and split the node."""
        membership, active, boundary = cell_membership(
            np.array([[0.3, 0.3]]), np.array([[[1.0, 0.0], [-1.0, 0.0]]]), np.array([0.1, 0.1])
        )

        assert active[0] == 0
        assert boundary[0]
        assert np.allclose(membership, [[0.5, 0.5]])

    def test_continuous_across_active_switch(self):
        """Swapping the two lowest of three nearly tied branches leaves the shares in place."""
        gradients = np.array([[[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]]] * 2)
        membership, active, boundary = cell_membership(
            np.array([[0.0, 1e-9, 0.02], [1e-9, 0.0, 0.02]]), gradients, np.array([0.1, 0.1])
        )

        assert list(active) == [0, 1]
        assert np.all(boundary)
        assert np.allclose(membership[0], membership[1], atol=1e-6)
        assert np.allclose(membership.sum(axis=1), 1.0)
        assert np.all(membership[:, 2] > 0.2)

    def test_distant_branch_is_interior(self):
        """A competing branch far above the envelope does not make the node a boundary node."""
        membership, _, boundary = cell_membership(
            np.array([[0.0, 5.0]]), np.array([[[1.0, 0.0], [-1.0, 0.0]]]), np.array([0.1, 0.1])
        )

        assert not boundary[0]
        assert np.allclose(membership, [[1.0, 0.0]])

    def test_nodal_mode(self):
        """Nodal membership assigns the whole node to the active branch."""
        membership, active, _ = cell_membership(
            np.array([[0.2, 0.1, 0.4]]), np.zeros((1, 3, 2)), np.array([0.1, 0.1]), "nodal"
        )

        assert active[0] == 1
        assert np.allclose(membership, [[0.0, 1.0, 0.0]])

    def test_unknown_mode(self):
        """Unknown membership modes are rejected."""
        with pytest.raises(ValueError):
            cell_membership(np.zeros((1, 2)), np.zeros((1, 2, 2)), np.array([0.1, 0.1]), "voronoi")


class TestConjugation:
    """Tests for the u- and v-transforms."""

    def test_tighten_yields_dual_pair(self, transform_service, grid, quadratic_ot):
        """u* = uT(vT(u)) dominates u and forms a dual pair."""
        u = np.sum(grid.nodes ** 2, axis=1)
        result = transform_service.tighten(quadratic_ot, grid, u, ATOMS)

        assert result.dual_pair_residual <= 1e-9
        assert np.all(result.u >= u - 1e-12)

    def test_tighten_is_idempotent(self, transform_service, grid, quadratic_ot):
        """Tightening a dual pair again changes nothing."""
        first = transform_service.tighten(quadratic_ot, grid, np.zeros(grid.size), ATOMS)
        second = transform_service.tighten(quadratic_ot, grid, first.u, ATOMS, first.s)

        assert np.allclose(second.u, first.u, atol=1e-10)
        assert np.allclose(second.s, first.s, atol=1e-10)
        assert second.feasibility_violation == 0.0

    @pytest.mark.parametrize("identifier", list(FamilyId), ids=lambda i: i.value)
    def test_tighten_idempotent_for_every_family(self, transform_service, identifier):
        """Tightening a lowered envelope gives a dual pair that a second tightening leaves alone."""
        family = CatalogService().make_family(CatalogEntry(identifier=identifier))
        family_grid = _family_grid(family)
        atoms = family.embed_target(np.array([[-0.1, 0.0], [0.1, 0.05]]))
        s = SolverService().initial_weights(family, family_grid, atoms)
        potential = transform_service.build_potential(family, family_grid, atoms, s)

        first = transform_service.tighten(family, family_grid, potential.u - 1e-3, atoms)
        second = transform_service.tighten(family, family_grid, first.u, atoms, first.s)

        assert first.dual_pair_residual <= 1e-9
        assert np.all(first.u >= potential.u - 1e-3 - 1e-12)
        assert np.allclose(second.u, first.u, atol=1e-10)
        assert np.allclose(second.s, first.s, atol=1e-10)

    def test_gauge_shift_keeps_cells(self, transform_service, grid, quadratic_ot):
        """Shifting every weight by c shifts u by -c and leaves every argmin in place."""
        s = np.array([0.03, -0.02])
        base = transform_service.build_potential(quadratic_ot, grid, ATOMS, s)
        shifted = transform_service.build_potential(quadratic_ot, grid, ATOMS, s + 0.7)

        assert np.array_equal(shifted.active, base.active)
        assert np.allclose(shifted.u, base.u - 0.7, atol=1e-12)

    def test_v_transform_closed_form(self, transform_service, grid, quadratic_ot):
        """For phi = s - c the v-transform is min_i c(x_i, y_j) - u_i."""
        u = 0.1 * grid.nodes[:, 0]
        s = transform_service.v_transform(quadratic_ot, grid, u, ATOMS)
        expected = np.min(quadratic_ot.cost(grid.nodes[:, None, :], ATOMS[None, :, :]) - u[:, None], axis=0)

        assert np.allclose(s, expected, atol=1e-12)

    def test_u_transform_is_envelope(self, transform_service, grid, quadratic_ot):
        """The u-transform of a potential reproduces its lower envelope."""
        potential = transform_service.build_potential(quadratic_ot, grid, ATOMS, np.array([0.05, -0.05]))
        u = transform_service.u_transform(quadratic_ot, grid, potential)

        assert np.allclose(u, potential.u, atol=1e-14)

    def test_invalid_weight(self, transform_service, grid):
        """Branches outside the validity region are reported with their location."""
        family = CatalogService().make_family(CatalogEntry(identifier=FamilyId.REFLECTOR_NF_PARALLEL))

        with pytest.raises(ValidityError) as info:
            transform_service.build_potential(family, grid, ATOMS, np.array([1.0, -1.0]))
        assert info.value.location["atom"] == 1


class TestCells:
    """Tests for cell decompositions and residuals."""

    def test_masses_sum_to_source(self, transform_service, grid, quadratic_ot):
        """Fractional cell masses partition the source mass."""
        potential = transform_service.build_potential(quadratic_ot, grid, ATOMS, np.array([0.0, 0.02]))
        cells = transform_service.decompose(quadratic_ot, grid, potential)

        assert np.isclose(cells.masses.sum(), grid.mass)
        assert cells.masses[1] > cells.masses[0]

    def test_symmetric_cells(self, transform_service, grid, quadratic_ot):
        """Equal weights split the square into equal halves."""
        potential = transform_service.build_potential(quadratic_ot, grid, ATOMS, np.zeros(2))
        cells = transform_service.decompose(quadratic_ot, grid, potential, "nodal")

        assert np.allclose(cells.masses, [0.5, 0.5])
        assert len(cells.node_lists()[0]) == 50

    def test_boundary_mass_fraction_is_mass_weighted(self, transform_service):
        """Boundary nodes in the heavy half of a linear density carry more than their node count."""
        chart = SourceChart(kind=ChartKind.BOX, dimension=2, lower=[0.0, 0.0], upper=[1.0, 1.0])
        linear = MeasureService().build_grid(chart, 10, DensitySpec(kind=DensityKind.EXPR, name="linear"))
        family = CatalogService().make_family(CatalogEntry(identifier=FamilyId.OT_COST))
        potential = transform_service.build_potential(family, linear, ATOMS, np.array([0.11, 0.0]))
        cells = transform_service.decompose(family, linear, potential)

        assert np.allclose(linear.nodes[cells.boundary, 0], 0.75)
        assert cells.boundary_mass_fraction == pytest.approx(0.15)
        assert cells.boundary_mass_fraction > np.mean(cells.boundary)

    def test_envelope_gradient_interior(self, transform_service, grid, quadratic_ot):
        """Du + phi_x vanishes inside a cell."""
        potential = transform_service.build_potential(quadratic_ot, grid, ATOMS, np.zeros(2))
        result = transform_service.envelope_gradient(quadratic_ot, grid, potential, _node(grid, [0.25, 0.45]))

        assert result.atom == 0
        assert result.residual <= 1e-10

    def test_envelope_gradient_at_boundary(self, transform_service, grid, quadratic_ot):
        """Nodes adjacent to another cell are not differentiable points."""
        potential = transform_service.build_potential(quadratic_ot, grid, ATOMS, np.zeros(2))

        with pytest.raises(NondifferentiablePoint):
            transform_service.envelope_gradient(quadratic_ot, grid, potential, _node(grid, [0.45, 0.45]))

    def test_envelope_residuals(self, transform_service, grid, quadratic_ot):
        """Envelope identity holds at every interior node."""
        potential = transform_service.build_potential(quadratic_ot, grid, ATOMS, np.zeros(2))
        result = transform_service.envelope_residuals(quadratic_ot, grid, potential)

        assert result["interior_nodes"] > 0
        assert result["max_residual"] <= 1e-10

    def test_generalized_residual(self, transform_service, grid, quadratic_ot):
        """Residuals compare cell masses with target weights."""
        measure = MeasureService().build_measure(ATOMS, [0.4, 0.6])
        potential = transform_service.build_potential(quadratic_ot, grid, ATOMS, np.zeros(2))
        cells = transform_service.decompose(quadratic_ot, grid, potential, "nodal")
        result = transform_service.generalized_residual(grid, measure, cells)

        assert np.allclose(result.residuals, [0.1, -0.1])
        assert np.isclose(result.max_relative, 0.1)

    def test_measure_preservation_bound(self, transform_service, grid, quadratic_ot):
        """Pushforward discrepancies stay within the mass-residual bound."""
        measure = MeasureService().build_measure(ATOMS, [0.5, 0.5])
        potential = transform_service.build_potential(quadratic_ot, grid, ATOMS, np.zeros(2))
        cells = transform_service.decompose(quadratic_ot, grid, potential)
        result = transform_service.measure_preservation(grid, measure, cells)

        assert set(result) == {"one", "y1", "y2", "y1_y2", "y_squared_norm"}
        for entry in result.values():
            assert entry["discrepancy"] <= entry["bound"] + 1e-12


class TestRegularity:
    """Tests for Lipschitz and objective monotonicity checks."""

    def test_lipschitz(self, transform_service, grid, quadratic_ot):
        """Difference quotients respect sup |phi_x| + |phi_y|."""
        potential = transform_service.build_potential(quadratic_ot, grid, ATOMS, np.array([0.1, -0.1]))

        assert transform_service.lipschitz_check(quadratic_ot, grid, potential)["satisfied"]

    def test_lipschitz_reflector(self, transform_service):
        """The paraboloid envelope respects the bound sampled from its family."""
        family = CatalogService().make_family(CatalogEntry(identifier=FamilyId.REFLECTOR_NF_PARALLEL))
        disk = _family_grid(family)
        atoms = np.array([[-0.1, 0.0], [0.1, 0.0], [0.0, 0.1]])
        potential = transform_service.build_potential(family, disk, atoms, np.array([1.0, 1.2, 0.9]))
        result = transform_service.lipschitz_check(family, disk, potential)

        assert result["satisfied"]
        assert result["max_quotient"] > 0.0

    def test_objective_nondecreasing_under_tightening(self, transform_service, grid, quadratic_ot):
        """Tightening a feasible pair never lowers the separable objective."""
        measure = MeasureService().build_measure(ATOMS, [0.5, 0.5])
        s = np.zeros(2)
        u = np.min(quadratic_ot.cost(grid.nodes[:, None, :], ATOMS[None, :, :]), axis=1) - 0.1
        before = transform_service.separable_objective(quadratic_ot, grid, measure, u, s)
        tightened = transform_service.tighten(quadratic_ot, grid, u, ATOMS, s)
        after = transform_service.separable_objective(quadratic_ot, grid, measure, tightened.u, tightened.s)

        assert after >= before - 1e-12


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
