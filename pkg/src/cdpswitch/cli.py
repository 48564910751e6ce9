"""Command line entry point.

Exit codes: 0 success, 1 config error, 2 runtime failure, 3 integrity
failures detected.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from .harness.config import ConfigError, load_config
from .harness.metrics import MetricsIoError, emit_metrics, to_json
from .harness.scenario import run_scenario
from .harness.traffic import TrafficError, generate_traffic, write_frames
from .offload.backends import WorkerConnectError
from .offload.worker import serve

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_INTEGRITY = 0, 1, 2, 3


def _run(args: argparse.Namespace) -> int:
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.link is not None:
        changes["link"] = args.link
    if args.format is not None:
        changes["output_format"] = args.format
    if args.out is not None:
        changes["output_path"] = args.out
    config = dataclasses.replace(config, **changes)
    try:
        report = run_scenario(config)
    except WorkerConnectError as exc:
        print(f"worker connect error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    try:
        if config.output_path:
            emit_metrics(report, config.output_format, config.output_path)
        else:
            print(to_json(report))
    except MetricsIoError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_RUNTIME
    if report.payload_integrity_failures:
        print(f"{report.payload_integrity_failures} payload integrity failures", file=sys.stderr)
        return EXIT_INTEGRITY
    return EXIT_OK


def _worker(args: argparse.Namespace) -> int:
    try:
        serve(args.listen, args.codec)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot listen on {args.listen}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _gen(args: argparse.Namespace) -> int:
    try:
        config = load_config(args.spec)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    seed = config.seed if args.seed is None else args.seed
    try:
        with open(args.out, "wb") as fh:
            n = write_frames(fh, generate_traffic(config.traffic, seed))
    except TrafficError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot write {args.out}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"wrote {n} frames to {args.out}", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cdpswitch", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a compressor -> decompressor scenario")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int)
    run.add_argument("--out")
    run.add_argument("--format", choices=("csv", "json"))
    run.add_argument("--link", choices=("inproc", "tcp"))
    run.set_defaults(func=_run)

    worker = sub.add_parser("worker", help="serve codec requests for the remote backend")
    worker.add_argument("--listen", required=True, help="host:port (port 0 picks a free one)")
    worker.add_argument("--codec", default="deflate-level=6")
    worker.set_defaults(func=_worker)

    gen = sub.add_parser("gen", help="write generated traffic as length-prefixed raw frames")
    gen.add_argument("--spec", required=True, help="config file with a [traffic] section")
    gen.add_argument("--out", required=True)
    gen.add_argument("--seed", type=int)
    gen.set_defaults(func=_gen)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
