"""Command-line entry point.

One subcommand per pipeline stage plus ``report``.  Exit codes: 0 on
success, 2 for configuration errors, 3 for missing dependencies, 4 for
stage failures.
"""

from __future__ import annotations

import argparse
import sys

from .config import ConfigInvalid, load_config
from .manifest import ManifestError
from .reports import REPORT_KINDS, MissingStage, emit_report
from .stages import STAGES, MissingDependency, StageFailure, run_stage

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DEPENDENCY = 3
EXIT_STAGE = 4


def build_parser():
    parser = argparse.ArgumentParser(
        prog="printforge",
        description="Fingerprint synthesis, realism metrics, and gallery search.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for stage in STAGES:
        p = sub.add_parser(stage, help=f"run the {stage} stage")
        p.add_argument("--config", help="JSON configuration document")
        p.add_argument("--preset", choices=("desk", "full"),
                       help="preset the document inherits from")
        p.add_argument("--seed", type=int, help="base seed override")
        p.add_argument("--jobs", type=int, help="worker count override")
        p.add_argument("--out", dest="out_root", help="output root override")
        p.add_argument("--force", action="store_true",
                       help="rerun even if the stage already completed")
    rep = sub.add_parser("report", help="render a report from a finished run")
    rep.add_argument("kind", choices=REPORT_KINDS)
    rep.add_argument("--run", required=True, help="run directory")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "report":
            paths = emit_report(args.kind, args.run)
            for path in paths:
                print(path)
            return EXIT_OK
        config = load_config(
            path=args.config,
            preset=args.preset,
            seed=args.seed,
            jobs=args.jobs,
            out_root=args.out_root,
        )
        outcome = run_stage(args.command, config, force=args.force)
        if outcome == "skipped":
            print(f"{args.command}: already done in {config.out_root} "
                  f"(use --force to rerun)")
        else:
            print(f"{args.command}: done in {config.out_root}")
        return EXIT_OK
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MissingDependency, MissingStage, ManifestError) as exc:
        print(f"dependency error: {exc}", file=sys.stderr)
        return EXIT_DEPENDENCY
    except StageFailure as exc:
        print(f"stage error: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
