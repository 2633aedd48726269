"""Command-line front end: `run` a scenario into a result directory, `check` a run against its legacy reference."""

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

from .config import legacy_reference, load_config, validate_config
from .errors import ConfigError, ReportError
from .export import Exporter
from .models import ScenarioConfig
from .network import build
from .trace import HexTraceWriter, PcapWriter
from .verdicts import DEFAULT_EPSILON, check_run

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _seconds(text: str) -> int:
    try:
        ns = round(float(text) * 1_000_000_000)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected seconds, got {text!r}") from None
    if ns <= 0:
        raise argparse.ArgumentTypeError("duration must be positive")
    return ns


def _seed_list(text: str) -> list[int]:
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated seeds, got {text!r}") from None
    if not seeds or any(s < 0 for s in seeds):
        raise argparse.ArgumentTypeError("seeds must be non-negative integers")
    return sorted(set(seeds))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qinq-access-sim",
                                     description="Hybrid flat-rate / shared-excess ISP traffic-control simulator")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate a scenario")
    run.add_argument("--config", required=True, help="scenario file")
    run.add_argument("--seed", type=int, help="master seed (overrides run.seed)")
    run.add_argument("--out", required=True, help="result directory")
    run.add_argument("--trace", choices=["hex", "pcap"], help="write a frame trace")
    run.add_argument("--duration", type=_seconds, help="simulated seconds (overrides run.duration)")
    run.add_argument("--legacy-reference", action="store_true",
                     help="run every shared-plan member on its own flat-rate TBF instead")
    run.add_argument("--sweep", type=_seed_list, help="comma-separated seeds, one process each")

    check = sub.add_parser("check", help="conformance and no-disadvantage verdicts")
    check.add_argument("--run", required=True, help="result directory of the hybrid run")
    check.add_argument("--reference", required=True, help="result directory of the legacy reference run")
    check.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON, help="allowed goodput shortfall")
    return parser


def simulate(config: ScenarioConfig, out_dir: str, trace: str | None = None) -> dict[str, str]:
    """Build, run and export one scenario; returns the written paths."""
    os.makedirs(out_dir, exist_ok=True)
    writer = None
    if trace == "hex":
        writer = HexTraceWriter(os.path.join(out_dir, "trace.hex"), config.run.strict_ethernet)
    elif trace == "pcap":
        writer = PcapWriter(out_dir, config.run.strict_ethernet)
    network = build(config, observers=[writer] if writer else [])
    try:
        report = network.run()
    finally:
        if writer is not None:
            writer.close()
    return Exporter().export_all(report, config, out_dir)


def _simulate_seed(config: ScenarioConfig, seed: int, out_dir: str, trace: str | None) -> str:
    seeded = replace(config, run=replace(config.run, seed=seed))
    simulate(seeded, os.path.join(out_dir, f"seed-{seed}"), trace)
    return os.path.join(out_dir, f"seed-{seed}")


def run_command(args: argparse.Namespace) -> int:
    try:
        config = load_config(args.config)
        run_spec = config.run
        if args.seed is not None:
            run_spec = replace(run_spec, seed=args.seed)
        if args.duration is not None:
            run_spec = replace(run_spec, duration_ns=args.duration)
        config = replace(config, run=run_spec)
        if args.legacy_reference:
            config = legacy_reference(config)
        validate_config(config)
    except FileNotFoundError as exc:
        logger.error("Config not readable: %s", exc.filename)
        return EXIT_CONFIG
    except ConfigError as exc:
        logger.error("Invalid config: %s", exc)
        return EXIT_CONFIG

    trace = args.trace or config.outputs.trace
    try:
        if args.sweep:
            with ProcessPoolExecutor() as pool:
                futures = [pool.submit(_simulate_seed, config, seed, args.out, trace) for seed in args.sweep]
                for future in futures:
                    logger.info("Finished %s", future.result())
        else:
            simulate(config, args.out, trace)
    except (RuntimeError, ValueError, OSError) as exc:
        logger.error("Run failed: %s", exc)
        return EXIT_RUNTIME
    return EXIT_OK


def check_command(args: argparse.Namespace) -> int:
    try:
        result = check_run(args.run, args.reference, args.epsilon)
    except ReportError as exc:
        logger.error("%s", exc)
        return EXIT_CONFIG
    if result.passed:
        logger.info("All verdicts pass")
        return EXIT_OK
    logger.info("Check failed")
    return EXIT_FAILED


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="[%(name)s] %(message)s", stream=sys.stderr)
    if args.command == "run":
        return run_command(args)
    return check_command(args)
