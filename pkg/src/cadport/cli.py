"""Command-line entry point: ``cadport <stage> [--config PATH] [--out DIR] [--seed N] [--stage-force]``."""

import argparse
import dataclasses
import logging
import sys

from cadport import pipeline
from cadport.config import resolve_out, validate_config
from cadport.errors import CadportError

EXIT_ERROR = 2


def build_parser():
    parser = argparse.ArgumentParser(prog="cadport", description="Cluster / agent / hedge portfolio pipeline.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML config (defaults apply to unset fields)")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides CADPORT_OUT and the config)")
    common.add_argument("--seed", type=int, help="global seed (overrides the config)")
    common.add_argument("--stage-force", action="store_true", help="rerun even if the stage stamp is current")
    common.add_argument("-q", "--quiet", action="store_true")
    sub = parser.add_subparsers(dest="stage", required=True)
    for stage in pipeline.STAGES:
        p = sub.add_parser(stage, parents=[common])
        if stage == "compare":
            p.add_argument("--strategies", help="comma-separated list, e.g. cad,bah,crp,pamr")
    sub.add_parser("all", parents=[common], help="run every stage in order")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    try:
        config = validate_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise CadportError("--seed must be non-negative")
            config = dataclasses.replace(config, seed=args.seed)
        out = resolve_out(config, args.out)
        strategies = None
        if getattr(args, "strategies", None):
            strategies = [s.strip().lower() for s in args.strategies.split(",") if s.strip()]
        if args.stage == "all":
            status = pipeline.run_pipeline(config, out, force=args.stage_force, strategies=strategies)
        else:
            status = {args.stage: pipeline.run_stage(config, out, args.stage, args.stage_force, strategies)}
    except CadportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    for stage, state in status.items():
        print(f"{stage}: {state}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
