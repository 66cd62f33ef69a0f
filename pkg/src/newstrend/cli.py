"""Command-line entry point: ``newstrend <verb> --config FILE``."""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Sequence

from .config import MODES, load_config
from .errors import ConfigError, MissingFixture, NewsTrendError, StageFailed
from .pipeline import STAGES, Pipeline

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3
EXIT_FIXTURE = 4

VERB_HELP = {
    "run": "run the full pipeline",
    "search": "issue the search requests and group result URLs",
    "fetch": "download and extract article text",
    "analyze": "score every article with the language model",
    "aggregate": "summarize analyses by period, by source and as a trend",
    "stats": "build the score table and boxplot summaries",
    "fit": "fit the Bayesian trend models",
    "report": "write tables, plots and the summary document",
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="campaign YAML file")
    common.add_argument("--mode", choices=MODES, help="override the config's mode")
    common.add_argument("--resume", action="store_true", help="skip stages whose outputs are up to date")
    common.add_argument("--seed", type=int, help="override the sampler seed")
    common.add_argument("--out", help="run directory (default: <runs_dir>/<config digest>)")
    common.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")

    parser = argparse.ArgumentParser(prog="newstrend", description="News-coverage trend analysis pipeline.")
    sub = parser.add_subparsers(dest="verb", required=True, metavar="VERB")
    for verb, text in VERB_HELP.items():
        sub.add_parser(verb, parents=[common], help=text, description=text)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")

    try:
        config = load_config(args.config).with_overrides(mode=args.mode, seed=args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    stages = list(STAGES) if args.verb == "run" else [args.verb]
    pipeline = Pipeline(config, args.out, resume=args.resume)
    try:
        result = pipeline.run(stages)
    except MissingFixture as exc:
        print(f"missing fixture: {exc.kind} {exc.key}", file=sys.stderr)
        return EXIT_FIXTURE
    except StageFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except NewsTrendError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE

    for record in result.stages:
        print(f"{record.name}: {'up to date' if record.skipped else 'done'}")
    print(f"run directory: {result.run_dir}")
    if result.bundle is not None:
        print(f"report: {result.run_dir / 'report' / 'summary.md'}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
