"""Command-line entry point: ``ssflab <subcommand> [options]``.

Exit codes: 0 all checks pass, 1 a numerical check failed, 2 configuration
error, 3 solver failure.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

from .config import PRESETS, load_config
from .errors import (BoxContaminationError, CertificateRejectedError, ConfigError,
                     InvalidBetaError, InvalidGridError, InvalidPotentialError, SSFError,
                     ShiftTooSmallError)
from .pipelines import PIPELINES, merge_reports, render_text, write_report

EXIT_PASS, EXIT_CHECK, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3

# violations of a stated precondition count as configuration errors
CONFIG_ERRORS = (ConfigError, ShiftTooSmallError, InvalidBetaError, BoxContaminationError,
                 InvalidGridError, InvalidPotentialError, CertificateRejectedError)

log = logging.getLogger("ssflab")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ssflab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in PIPELINES:
        p = sub.add_parser(name)
        p.add_argument("--config", metavar="PATH")
        p.add_argument("--preset", choices=sorted(PRESETS))
        p.add_argument("--out", metavar="DIR")
        p.add_argument("--threads", type=int, default=1, metavar="N", help="0 = one per CPU")
        p.add_argument("--tolerance-override", action="append", default=[], metavar="KEY=VAL")
        p.add_argument("-v", "--verbose", action="store_true")
    p = sub.add_parser("report", help="merge report.json files from earlier runs")
    p.add_argument("runs", nargs="+", metavar="RUN_DIR")
    p.add_argument("--out", metavar="DIR")
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.command == "report":
        try:
            rep = merge_reports(args.runs)
        except (OSError, ValueError, KeyError) as exc:
            print(f"error: cannot merge reports: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        if args.out:
            write_report(rep, args.out)
        sys.stdout.write(render_text(rep))
        return EXIT_PASS if rep.passed else EXIT_CHECK

    if args.threads < 0:
        print("error: --threads must be >= 0", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config, args.preset, args.tolerance_override)
    except CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or cfg.output_dir
    log.info("running %s (config %s, hash %s)", args.command, cfg.source, cfg.digest)
    try:
        rep = PIPELINES[args.command](cfg, threads=args.threads)
    except CONFIG_ERRORS as exc:
        print(f"config error ({cfg.source}): {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SSFError as exc:
        print(f"solver failure ({cfg.source}): {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    write_report(rep, out, cfg)
    sys.stdout.write(render_text(rep))
    log.info("wrote %s", os.path.abspath(out))
    return EXIT_PASS if rep.passed else EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
