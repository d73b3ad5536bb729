"""Command-line interface.

Subcommands:
    run      simulate one scenario, write its trace and metrics
    compare  run decentralized and centralized on the same scenario
    analyze  recompute metrics for an existing trace file

Exit status: 0 on success, 1 for configuration errors, 2 for runtime
failures; every failure prints a one-line diagnostic to stderr.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import analysis, engine, traceio
from .config import load_scenario
from .engine import PRESET_NAMES
from .errors import ConfigError
from .scenario import MODE_CENTRALIZED, MODE_DECENTRALIZED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bessim",
        description="Heterogeneous battery storage simulator with broadcast control",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="simulate one scenario")
    _add_scenario_source(run_p)
    run_p.add_argument("--trace", required=True, help="output trace CSV path")
    run_p.add_argument("--metrics", required=True, help="output metrics JSON path")
    run_p.add_argument("--decimate", type=int, default=1, help="keep every Nth trace row")

    cmp_p = sub.add_parser("compare", help="run both control modes on one scenario")
    _add_scenario_source(cmp_p)
    cmp_p.add_argument("--out", required=True, help="output directory")
    cmp_p.add_argument("--decimate", type=int, default=1, help="keep every Nth trace row")

    an_p = sub.add_parser("analyze", help="recompute metrics for an existing trace")
    an_p.add_argument("--trace", required=True, help="trace CSV produced by run/compare")
    an_p.add_argument("--config", required=True, help="scenario file the trace came from")
    an_p.add_argument("--out", required=True, help="output metrics JSON path")

    return parser


def _add_scenario_source(parser: argparse.ArgumentParser) -> None:
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--config", help="scenario file")
    source.add_argument("--preset", choices=PRESET_NAMES, help="bundled scenario name")


def _load(args: argparse.Namespace):
    if args.preset:
        return engine.preset(args.preset)
    return load_scenario(args.config)


def _cmd_run(args: argparse.Namespace) -> int:
    scenario = _load(args)
    trace = engine.run(scenario)
    traceio.write_trace(trace, args.trace, decimate=args.decimate)
    traceio.write_metrics(analysis.metrics_document(trace, scenario), args.metrics)
    return 0


def _cmd_compare(args: argparse.Namespace) -> int:
    scenario = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    document = {}
    for mode in (MODE_DECENTRALIZED, MODE_CENTRALIZED):
        variant = scenario.with_mode(mode)
        trace = engine.run(variant)
        traceio.write_trace(trace, out / f"trace_{mode}.csv", decimate=args.decimate)
        document[mode] = analysis.metrics_document(trace, variant)
    traceio.write_metrics(document, out / "metrics.json")
    return 0


def _cmd_analyze(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.config)
    trace = traceio.read_trace(args.trace, scenario)
    traceio.write_metrics(analysis.metrics_document(trace, scenario), args.out)
    return 0


_COMMANDS = {"run": _cmd_run, "compare": _cmd_compare, "analyze": _cmd_analyze}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime/infeasibility failures
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
