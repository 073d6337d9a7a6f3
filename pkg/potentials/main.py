"""Command-line orchestrator for the solve, verify, duality and check workflows."""
import argparse
import logging
import sys
from typing import List, Optional

from potentials.config.settings import settings
from potentials.workflows.check_workflow import CheckWorkflow
from potentials.workflows.duality_workflow import DualityWorkflow
from potentials.workflows.solve_workflow import SolveWorkflow
from potentials.workflows.verify_workflow import VerifyWorkflow

# Configure logging
logging.basicConfig(
    level=getattr(logging, settings.log_level),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)


class PotentialsApp:
    """Main orchestrator."""

    def __init__(self):
        """Initialize workflows."""
        self.solve_workflow = SolveWorkflow()
        self.verify_workflow = VerifyWorkflow()
        self.duality_workflow = DualityWorkflow()
        self.check_workflow = CheckWorkflow()
        logger.info("Potentials app initialized")

    def cmd_solve(self, config: str, out: str, seed: Optional[int] = None, tol: Optional[float] = None) -> int:
        return int(self.solve_workflow.run(config, out, seed, tol))

    def cmd_verify(
        self,
        config: str,
        report: str,
        out: str,
        rays: Optional[int] = None,
        tol: Optional[float] = None,
        seed: Optional[int] = None
    ) -> int:
        return int(self.verify_workflow.run(config, report, out, rays, tol, seed))

    def cmd_duality(self, config: str, out: str, seed: Optional[int] = None, tol: Optional[float] = None) -> int:
        return int(self.duality_workflow.run(config, out, seed, tol))

    def cmd_check(self, family: str, samples: int, seed: int, out: str) -> int:
        return int(self.check_workflow.run(family, samples, seed, out))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="potentials", description=__doc__)
    commands = parser.add_subparsers(dest="command", required=True)

    solve = commands.add_parser("solve", help="solve a semi-discrete problem")
    solve.add_argument("--config", required=True)
    solve.add_argument("--out", default=settings.output_dir)
    solve.add_argument("--seed", type=int)
    solve.add_argument("--tol", type=float, help="relative cell-mass tolerance")

    verify = commands.add_parser("verify", help="raytrace a solved potential")
    verify.add_argument("--config", required=True)
    verify.add_argument("--report", help="solve_report.json (defaults to the one in --out)")
    verify.add_argument("--out", default=settings.output_dir)
    verify.add_argument("--rays", type=int, help="rays per source node")
    verify.add_argument("--tol", type=float, help="histogram L1 tolerance")
    verify.add_argument("--seed", type=int)

    duality = commands.add_parser("duality", help="duality-gap experiment on a finite instance")
    duality.add_argument("--config", required=True)
    duality.add_argument("--out", default=settings.output_dir)
    duality.add_argument("--seed", type=int)
    duality.add_argument("--tol", type=float, help="gap tolerance")

    check = commands.add_parser("check", help="sampled hypothesis checks for a family")
    check.add_argument("--family", required=True)
    check.add_argument("--samples", type=int, default=200)
    check.add_argument("--seed", type=int, default=settings.default_seed)
    check.add_argument("--out", default=settings.output_dir)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    app = PotentialsApp()
    try:
        if args.command == "solve":
            return app.cmd_solve(args.config, args.out, args.seed, args.tol)
        if args.command == "verify":
            report = args.report or f"{args.out}/solve_report.json"
            return app.cmd_verify(args.config, report, args.out, args.rays, args.tol, args.seed)
        if args.command == "duality":
            return app.cmd_duality(args.config, args.out, args.seed, args.tol)
        return app.cmd_check(args.family, args.samples, args.seed, args.out)
    except Exception as e:
        logger.error(f"Error running {args.command}: {e}")
        raise


if __name__ == "__main__":
    sys.exit(main())
