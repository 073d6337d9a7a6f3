"""Tests for the command-line workflows."""
import json
from pathlib import Path

import pytest
from unittest.mock import patch

from potentials.families.reflectors import ParallelReflectorFamily
from potentials.main import build_parser, main
from potentials.models.catalog import FamilyId
from potentials.models.config import ExitCode
from potentials.services.config_service import ConfigService

DATA = Path(__file__).resolve().parent.parent / "data"


@pytest.fixture
def config_service():
    """Create config service instance."""
    return ConfigService()


def _read(path):
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def _write(path, payload):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f)
    return str(path)


def _two_atom_reflector():
    return {
        "family": {"identifier": "reflector-nf-parallel", "dimension": 2},
        "source": {"chart": {"kind": "disk", "dimension": 2, "radius": 0.3}, "resolution": 40},
        "target": {"atoms": [[-0.1, 0.0], [0.1, 0.0]], "weights": [1.0, 1.0]},
        "verify": {"rays_per_node": 1, "tol_histogram": 0.01},
    }


class TestCheckCommand:
    """Tests for the check command."""

    def test_check_passes(self, tmp_path):
        """A catalog family passes its hypothesis checks."""
        code = main(["check", "--family", "reflector-nf-parallel", "--samples", "50", "--out", str(tmp_path)])
        report = _read(tmp_path / "check_report.json")

        assert code == ExitCode.OK
        assert report["status"] == "passed"
        assert report["derivatives"]["passed"]

    @pytest.mark.parametrize("family", [identifier.value for identifier in FamilyId])
    def test_every_catalog_family_passes(self, tmp_path, family):
        """Each catalog id passes derivative and monotonicity checks with default parameters."""
        code = main(["check", "--family", family, "--out", str(tmp_path)])
        report = _read(tmp_path / "check_report.json")

        assert code == ExitCode.OK
        assert report["derivatives"]["first_order_max"] <= 1e-6
        assert report["derivatives"]["second_order_max"] <= 1e-4

    def test_zero_samples(self, tmp_path):
        """samples = 0 is a parameter error."""
        code = main(["check", "--family", "ot-cost", "--samples", "0", "--out", str(tmp_path)])

        assert code == ExitCode.CONFIG_ERROR
        assert _read(tmp_path / "check_report.json")["status"] == "error"

    def test_unknown_family(self, tmp_path):
        """Unknown identifiers are configuration errors."""
        code = main(["check", "--family", "lens-xyz", "--out", str(tmp_path)])

        assert code == ExitCode.CONFIG_ERROR

    def test_broken_derivative(self, tmp_path):
        """A wrong phi_x makes the check fail."""
        original = ParallelReflectorFamily.phi_x

        def broken(self, x, y, s):
            return original(self, x, y, s) + 0.01

        with patch.object(ParallelReflectorFamily, "phi_x", new=broken):
            code = main(["check", "--family", "reflector-nf-parallel", "--samples", "50", "--out", str(tmp_path)])
        report = _read(tmp_path / "check_report.json")

        assert code == ExitCode.FAILED
        assert report["derivatives"]["worst_derivative"] == "phi_x"


class TestSolveCommand:
    """Tests for the solve command."""

    def test_transport_solve(self, tmp_path):
        """The two-atom transport instance converges and writes its outputs."""
        code = main(["solve", "--config", str(DATA / "ot_two_atoms.json"), "--out", str(tmp_path)])
        report = _read(tmp_path / "solve_report.json")

        assert code == ExitCode.OK
        assert report["status"] == "converged"
        assert report["schema_version"] == "1.0"
        assert (tmp_path / "cells.csv").exists()
        assert (tmp_path / "solve_timing.json").exists()

    def test_reports_are_reproducible(self, tmp_path):
        """Two runs with the same seed write byte-identical reports."""
        config = str(DATA / "ot_two_atoms.json")
        main(["solve", "--config", config, "--out", str(tmp_path / "a"), "--seed", "3"])
        main(["solve", "--config", config, "--out", str(tmp_path / "b"), "--seed", "3"])

        first = (tmp_path / "a" / "solve_report.json").read_bytes()
        second = (tmp_path / "b" / "solve_report.json").read_bytes()
        assert first == second

    def test_invalid_refraction_ratio(self, tmp_path):
        """kappa = 1.2 in the kappa < 1 regime is rejected before solving."""
        payload = {
            "family": {"identifier": "refractor-nf-point", "dimension": 2, "kappa": 1.2},
            "source": {"chart": {"kind": "sphere-cap", "dimension": 2, "radius": 0.3}},
            "target": {"atoms": [[0.0, 0.0]], "weights": [1.0]},
        }
        config = _write(tmp_path / "bad.json", payload)

        assert main(["solve", "--config", config, "--out", str(tmp_path)]) == ExitCode.CONFIG_ERROR
        assert not (tmp_path / "solve_report.json").exists()

    def test_missing_config(self, tmp_path):
        """Missing config files are configuration errors."""
        code = main(["solve", "--config", str(tmp_path / "absent.json"), "--out", str(tmp_path)])

        assert code == ExitCode.CONFIG_ERROR


class TestVerifyCommand:
    """Tests for the verify command."""

    def test_paraboloid(self, tmp_path):
        """A solved single paraboloid illuminates its atom exactly."""
        config = str(DATA / "paraboloid_single.json")
        assert main(["solve", "--config", config, "--out", str(tmp_path)]) == ExitCode.OK

        code = main(["verify", "--config", config, "--out", str(tmp_path)])
        report = _read(tmp_path / "trace_report.json")

        assert code == ExitCode.OK
        assert report["status"] == "passed"
        assert report["trace"]["histogram_l1"] <= 1e-12
        assert (tmp_path / "rays.csv").exists()

    @pytest.mark.parametrize("name", ["reflector_parallel_five.json", "point_reflector_three.json"])
    def test_multi_atom_illumination(self, tmp_path, name):
        """Solved multi-atom reflectors reproduce their targets within one percent."""
        config = str(DATA / name)
        assert main(["solve", "--config", config, "--out", str(tmp_path)]) == ExitCode.OK

        code = main(["verify", "--config", config, "--out", str(tmp_path)])
        report = _read(tmp_path / "trace_report.json")

        assert code == ExitCode.OK
        assert report["trace"]["histogram_l1"] <= 0.01
        assert report["trace"]["energy_defect"] <= 1e-12

    def test_corrupted_weights(self, tmp_path):
        """Perturbed weights move light between cells and exceed the tolerance."""
        config = _write(tmp_path / "two.json", _two_atom_reflector())
        assert main(["solve", "--config", config, "--out", str(tmp_path)]) == ExitCode.OK

        solved = _read(tmp_path / "solve_report.json")
        solved["report"]["s"][1] += 0.3
        report_path = _write(tmp_path / "corrupted.json", solved)
        code = main(["verify", "--config", config, "--report", report_path, "--out", str(tmp_path)])

        assert code == ExitCode.FAILED
        assert _read(tmp_path / "trace_report.json")["status"] == "tolerance-exceeded"

    def test_mismatched_report(self, tmp_path):
        """A report solved for another config is rejected."""
        assert main(["solve", "--config", str(DATA / "ot_two_atoms.json"), "--out", str(tmp_path)]) == ExitCode.OK

        code = main(["verify", "--config", str(DATA / "paraboloid_single.json"), "--out", str(tmp_path)])

        assert code == ExitCode.CONFIG_ERROR
        assert _read(tmp_path / "trace_report.json")["status"] == "hash-mismatch"


class TestDualityCommand:
    """Tests for the duality command."""

    def test_slater_instance(self, tmp_path):
        """The hand-checked instance closes its gap."""
        code = main(["duality", "--config", str(DATA / "duality_slater.json"), "--out", str(tmp_path)])
        report = _read(tmp_path / "gap_report.json")

        assert code == ExitCode.OK
        assert report["status"] == "passed"
        assert report["gap"]["dual_value"] == pytest.approx(0.75, abs=1e-6)
        assert report["weak_duality"]["passed"]

    def test_no_slater_instance(self, tmp_path):
        """Without a Slater point the gap is reported unasserted."""
        code = main(["duality", "--config", str(DATA / "duality_no_slater.json"), "--out", str(tmp_path)])

        assert code == ExitCode.OK
        assert _read(tmp_path / "gap_report.json")["status"] == "unasserted"

    def test_malformed_config(self, tmp_path):
        """Unparseable configs exit with a configuration error."""
        path = tmp_path / "broken.json"
        path.write_text("{not json", encoding="utf-8")

        assert main(["duality", "--config", str(path), "--out", str(tmp_path)]) == ExitCode.CONFIG_ERROR


class TestConfigs:
    """Tests for config parsing."""

    @pytest.mark.parametrize("name", [
        "ot_two_atoms.json", "paraboloid_single.json", "reflector_parallel_five.json",
        "ellipsoid_single.json", "point_reflector_three.json", "reflector_parallel_circle.json",
    ])
    def test_problem_round_trip(self, config_service, name):
        """Dumped configs validate back to equal configs with the same hash."""
        config = config_service.load_problem(DATA / name)
        again = config_service.load_problem(config_service.dump(config))

        assert again == config
        assert config_service.instance_hash(again) == config_service.instance_hash(config)

    def test_generated_targets(self, config_service):
        """Circle generators place the requested number of atoms."""
        config = config_service.load_problem(DATA / "point_reflector_three.json")
        family = config_service.catalog_service.make_family(config.family)
        grid = config_service.build_grid(config)
        measure = config_service.build_target(config, family, grid)

        assert measure.count == 3
        assert measure.mass == pytest.approx(grid.mass)

    def test_parser_requires_command(self):
        """A subcommand is mandatory."""
        with pytest.raises(SystemExit):
            build_parser().parse_args([])


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
