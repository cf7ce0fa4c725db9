#!/usr/bin/env python3
"""
PathDetective - Greybox Fuzzer for Stateful Contracts
Fuzzes contracts written in a small contract language, predicting inputs
that flip branch conditions and growing transaction sequences on demand.

Usage:
    python main.py run benchmarks/foo.mvc --config B --seed 7 --max-execs 200000
    python main.py replay witnesses/Foo-SWC-110-13_7-seed7.json
    python main.py aggregate stats-*.jsonl --budget 100000
    python main.py benchmarks --out corpus/

Requirements:
    - Python 3.10+
    - psutil
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

logger = logging.getLogger("main")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_DEPLOY = 4
EXIT_IO = 5
EXIT_NOT_REPRODUCED = 6
EXIT_VERSION = 7


def check_dependencies() -> bool:
    """Check if all required dependencies are installed."""
    missing = []

    try:
        import psutil  # noqa: F401
    except ImportError:
        missing.append("psutil")

    if missing:
        print("Missing required packages:", file=sys.stderr)
        for pkg in missing:
            print(f"  - {pkg}", file=sys.stderr)
        print("\nInstall them with:", file=sys.stderr)
        print(f"  pip install {' '.join(missing)}", file=sys.stderr)
        return False

    return True


def setup_logging(verbosity: int):
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity > 1:
        level = logging.DEBUG
    logging.basicConfig(level=level, format="[%(levelname)s] %(name)s: %(message)s", stream=sys.stderr)


def _int_value(text: str) -> int:
    """Decimal or 0x-prefixed integer."""
    return int(text, 0)


def build_parser() -> argparse.ArgumentParser:
    from campaign_config import DEFAULT_AGGRESSIVE_PROBABILITY
    from input_predictor import DEFAULT_SECANT_ITERATIONS
    from sequence_fuzzer import MAX_SEQUENCE_LENGTH
    from version import APP_NAME, APP_VERSION

    parser = argparse.ArgumentParser(prog="pathdetective", description=f"{APP_NAME} greybox contract fuzzer")
    parser.add_argument("--version", action="version", version=f"{APP_NAME} {APP_VERSION}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more log output (repeat for debug)")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="fuzz a contract")
    run.add_argument("contract", help="contract file (.mvc); shipped benchmark names are accepted too")
    run.add_argument("--config", choices=["A", "B", "C", "D"], default="B")
    run.add_argument("--seed", type=_int_value, default=0)
    run.add_argument("--max-execs", type=int, default=None, help="execution budget")
    run.add_argument("--max-seconds", type=float, default=None, help="wall-time budget; give at least one of the two")
    run.add_argument("--max-seq-len", type=int, default=MAX_SEQUENCE_LENGTH)
    run.add_argument("--aggressive-prob", type=float, default=DEFAULT_AGGRESSIVE_PROBABILITY)
    run.add_argument("--attack-slot", type=_int_value, default=None)
    run.add_argument("--no-literal-harvest", action="store_true")
    run.add_argument("--secant-iters", type=int, default=DEFAULT_SECANT_ITERATIONS)
    run.add_argument("--merge-policy", choices=["min", "first"], default="min")
    run.add_argument("--no-step-budget-bugs", action="store_true", help="do not report step-budget exhaustion as SWC-110")
    run.add_argument("--wall-clock", action="store_true", help="record wall time in events (stream no longer reproducible)")
    run.add_argument("--stats-out", type=Path, default=None, help="line-delimited event stream")
    run.add_argument("--witness-dir", type=Path, default=None, help="write one witness file per finding")
    run.add_argument("--campaigns", type=int, default=1, help="repeat with seeds seed..seed+N-1")
    run.add_argument("--jobs", type=int, default=0, help="worker processes for repeated campaigns (0: one per CPU)")

    replay = commands.add_parser("replay", help="re-execute a witness file")
    replay.add_argument("witness", type=Path)

    agg = commands.add_parser("aggregate", help="medians over stats files")
    agg.add_argument("stats", type=Path, nargs="+")
    agg.add_argument("--budget", type=int, default=None, help="executions charged to campaigns without a bug")

    bench = commands.add_parser("benchmarks", help="list or write the shipped benchmark contracts")
    bench.add_argument("--out", type=Path, default=None)
    return parser


def read_contract_source(path_text: str) -> str:
    """Read a contract file, falling back to a shipped benchmark of the same name."""
    from benchmark_corpus import benchmark_names, load_benchmark_source

    path = Path(path_text)
    if not path.exists() and path.stem in benchmark_names() and path.parent == Path("."):
        logger.info("using shipped benchmark %s", path.stem)
        return load_benchmark_source(path.stem)
    return path.read_text(encoding="utf-8")


def _stats_path(base: Path, seed: int) -> Path:
    return base.with_name(f"{base.stem}.seed{seed}{base.suffix}")


def cmd_run(args) -> int:
    from campaign_config import CampaignConfig
    from contract_parser import ContractError, parse_contract
    from contract_vm import ContractVM, DeploymentError
    from fuzz_engine import GreyboxFuzzer
    from host_info import HostInspector
    from stats_stream import StatsRecorder, aggregate, format_summary, write_events
    from witness import write_witnesses

    try:
        config = CampaignConfig.from_args(args)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    try:
        source = read_contract_source(args.contract)
    except OSError as e:
        print(f"error: cannot read {args.contract}: {e.strerror or e}", file=sys.stderr)
        return EXIT_IO
    try:
        contract = parse_contract(source)
    except ContractError as e:
        print(f"{args.contract}: {e}", file=sys.stderr)
        return EXIT_PARSE
    try:
        ContractVM(contract).deploy()
    except DeploymentError as e:
        print(f"{args.contract}: {e}", file=sys.stderr)
        return EXIT_DEPLOY

    logger.info("host: %s", HostInspector.snapshot())

    if args.campaigns > 1:
        from campaign_runner import MultiCampaignRunner

        seeds = [config.rng_seed + i for i in range(args.campaigns)]
        outcomes = MultiCampaignRunner(source, config, seeds, args.jobs).run()
        try:
            for outcome in outcomes:
                if args.stats_out:
                    write_events(_stats_path(args.stats_out, outcome.seed), outcome.events)
                if args.witness_dir and outcome.findings:
                    write_witnesses(outcome.findings, contract, replace(config, rng_seed=outcome.seed), args.witness_dir)
        except OSError as e:
            print(f"error: cannot write {e.filename}: {e.strerror}", file=sys.stderr)
            return EXIT_IO
        for outcome in outcomes:
            if outcome.error:
                print(f"seed {outcome.seed}: failed ({outcome.error})")
            else:
                print(format_summary(outcome.summary, f"{contract.name} config {config.configuration.value} seed {outcome.seed}"))
            print()
        report = aggregate([o.summary for o in outcomes if not o.error], budget=config.max_executions)
        print(json.dumps(report, indent=2))
        return EXIT_OK

    try:
        sink = open(args.stats_out, "w", encoding="utf-8") if args.stats_out else None
    except OSError as e:
        print(f"error: cannot write {args.stats_out}: {e.strerror}", file=sys.stderr)
        return EXIT_IO
    try:
        result = GreyboxFuzzer(contract, config, StatsRecorder(sink=sink)).fuzz_loop()
    finally:
        if sink is not None:
            sink.close()

    print(format_summary(result.summary, f"{contract.name} config {config.configuration.value} seed {config.rng_seed}"))
    if args.witness_dir and result.findings:
        try:
            for path in write_witnesses(result.findings, contract, config, args.witness_dir):
                print(f"witness: {path}")
        except OSError as e:
            print(f"error: cannot write {e.filename}: {e.strerror}", file=sys.stderr)
            return EXIT_IO
    logger.info("resident memory: %.1f MiB", HostInspector.process_rss() / 2**20)
    return EXIT_OK


def cmd_replay(args) -> int:
    from contract_parser import ContractError
    from contract_vm import DeploymentError
    from witness import WitnessError, WitnessVersionError, load_witness, replay

    try:
        record = load_witness(args.witness)
        report = replay(record)
    except OSError as e:
        print(f"error: cannot read {args.witness}: {e.strerror or e}", file=sys.stderr)
        return EXIT_IO
    except WitnessVersionError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VERSION
    except (WitnessError, ContractError) as e:
        print(f"{args.witness}: {e}", file=sys.stderr)
        return EXIT_PARSE
    except DeploymentError as e:
        print(f"{args.witness}: {e}", file=sys.stderr)
        return EXIT_DEPLOY
    print(report.describe())
    return EXIT_OK if report.reproduced else EXIT_NOT_REPRODUCED


def cmd_aggregate(args) -> int:
    from stats_stream import aggregate, read_events, summarize

    summaries = []
    for path in args.stats:
        try:
            summaries.append(summarize(read_events(path)))
        except OSError as e:
            print(f"error: cannot read {path}: {e.strerror or e}", file=sys.stderr)
            return EXIT_IO
        except (ValueError, KeyError) as e:
            print(f"{path}: not a stats stream ({e})", file=sys.stderr)
            return EXIT_PARSE
    print(json.dumps(aggregate(summaries, budget=args.budget), indent=2))
    return EXIT_OK


def cmd_benchmarks(args) -> int:
    from benchmark_corpus import benchmark_names, write_corpus

    if args.out is None:
        for name in benchmark_names():
            print(name)
        return EXIT_OK
    try:
        for path in write_corpus(args.out):
            print(path)
    except OSError as e:
        print(f"error: cannot write {e.filename}: {e.strerror}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "replay": cmd_replay,
    "aggregate": cmd_aggregate,
    "benchmarks": cmd_benchmarks,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point for the command-line fuzzer."""
    if not check_dependencies():
        return 1
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose)
    return COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
