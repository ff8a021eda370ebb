"""
Command-line interface: polesearch run | sweep | generate | verify
"""

import argparse
import logging
import os
from pathlib import Path
from typing import List, Optional

from dotenv import load_dotenv

from .config import ExperimentConfig
from .exceptions import PoleSearchError
from .instance_gen import load_instance, save_instance
from .runner import ExperimentRunner, InstanceJob
from .simulation import sample_realizations
from .verification import OracleVerifier

logger = logging.getLogger(__name__)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="Experiment configuration (JSON)")
    parser.add_argument("--seed", type=int, help="Root seed")
    parser.add_argument("--runs", type=int, help="Simulation runs per instance (default 100)")
    parser.add_argument("--out", help="Output directory")
    parser.add_argument("--jobs", type=int, help="Worker processes")
    parser.add_argument("--no-progress", action="store_true", help="Disable progress bar")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polesearch", description="Multi-agent stochastic charging-pole search experiments"
    )
    parser.add_argument(
        "--log-level",
        default=os.getenv("POLESEARCH_LOG_LEVEL", "INFO"),
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Logging level",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="Evaluate all settings on the configured grid")
    _add_common(run)
    run.add_argument("--instance", action="append", help="Evaluate instance file(s) instead of the grid")

    sweep = commands.add_parser("sweep", help="Global penalty sensitivity of the beta-sensitive settings")
    _add_common(sweep)
    sweep.add_argument("--beta", type=float, nargs="+", help="Global penalty values")

    generate = commands.add_parser("generate", help="Write the grid's instances as JSON files")
    _add_common(generate)

    verify = commands.add_parser("verify", help="Run the oracle verification suite")
    verify.add_argument("--seed", type=int, default=0, help="Seed of the random tiny instances")
    verify.add_argument("--scale", type=float, default=1.0, help="Multiplier on the number of cases")
    verify.add_argument("--output", help="Write the report to this file")
    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    overrides = {"seed": args.seed, "runs": args.runs, "out_dir": args.out, "jobs": args.jobs}
    if args.config:
        return ExperimentConfig.from_file(args.config, **overrides)
    return ExperimentConfig.from_dict({}, **overrides)


def _instance_jobs(paths: List[str], config: ExperimentConfig) -> List[InstanceJob]:
    jobs = []
    for index, path in enumerate(paths):
        instance = load_instance(path)
        agents = instance.agents
        point = {
            "n_agents": len(agents),
            "start_radius": float("nan"),
            "search_radius": agents[0].radius if agents else float("nan"),
            "start_spread": agents[-1].t0 - agents[0].t0 if agents else 0.0,
            "mean_availability": sum(s.p for s in instance.graph.stations) / max(1, instance.graph.n_stations),
        }
        matrix = sample_realizations(instance, config.runs, config.seed + index)
        jobs.append(InstanceJob(Path(path).stem, point, instance, matrix))
    return jobs


def main(argv: Optional[List[str]] = None) -> int:
    """Command-line entry point"""
    load_dotenv(dotenv_path=".env", override=False)
    args = build_parser().parse_args(argv)

    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )

    try:
        if args.command == "verify":
            verifier = OracleVerifier(seed=args.seed, scale=args.scale)
            success = verifier.run_validation()
            report = verifier.generate_report()
            if args.output:
                Path(args.output).write_text(report + "\n")
                logger.info(f"Verification report saved to: {args.output}")
            else:
                print("\n" + report)
            return 0 if success else 1

        config = load_config(args)
        runner = ExperimentRunner(config, show_progress=not args.no_progress)

        if args.command == "generate":
            jobs = runner.build_instances()
            target = Path(config.out_dir) / "instances"
            for job in jobs:
                save_instance(job.instance, target / f"{job.key}.json")
            logger.info(f"Wrote {len(jobs)} instances to {target}")
            return 0

        if args.command == "run":
            jobs = _instance_jobs(args.instance, config) if args.instance else None
            result = runner.run(jobs)
        else:
            result = runner.sweep(args.beta)

        print("\n" + result.summary())
        return 1 if result.failed_cells else 0

    except PoleSearchError as e:
        logger.error(f"Error: {e}")
        return 2


if __name__ == "__main__":
    exit(main())
