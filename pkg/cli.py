"""Command-line entry point: prepare, train, run and score."""
import argparse
import json
import logging
import os
import sys
from typing import List, Optional

from dotenv import load_dotenv

from commands.prepare import cmd_prepare
from commands.run import cmd_run
from commands.score import cmd_score
from commands.train import cmd_train
from config import VERSION
from errors import UpliftError

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    parser.add_argument("-q", "--quiet", action="store_true", help="warnings and errors only")
    parser.add_argument("--config", help="TOML run configuration")
    parser.add_argument("--seed", type=int, help="seed for forests and partitions")
    parser.add_argument("--threads", type=int, help="worker cap (default: all cores)")
    parser.add_argument("--out", help="output directory (score: output CSV)")


def _add_source(parser: argparse.ArgumentParser) -> None:
    source = parser.add_mutually_exclusive_group()
    source.add_argument("--data", help="campaign CSV")
    source.add_argument("--hillstrom", action="store_true", help="the public Hillstrom e-mail data")
    source.add_argument("--synthetic", action="store_true", help="default synthetic campaign")
    parser.add_argument("--schema", help="JSON column roles for --data (as written by prepare)")
    parser.add_argument("--download", action="store_true", help="fetch the Hillstrom file if missing")


def _add_model_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--scheme", help="comparison or combined")
    parser.add_argument("--trees", type=int, help="causal forest size")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uplift-forest",
        description="Multi-treatment revenue uplift modelling with causal forests",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    prepare = sub.add_parser("prepare", help="audit a data source and cache it as CSV")
    _add_common(prepare)
    _add_source(prepare)
    prepare.add_argument("--json", action="store_true", help="print the audit as JSON")
    prepare.set_defaults(handler=cmd_prepare)

    train = sub.add_parser("train", help="fit forests on a full dataset and save the model")
    _add_common(train)
    _add_source(train)
    _add_model_options(train)
    train.add_argument("--modes", help="outcome mode to fit: rev or conv")
    train.add_argument("--model", help="model file (default: <out>/model.json)")
    train.set_defaults(handler=cmd_train)

    run = sub.add_parser("run", help="partitioned experiment with report files")
    _add_common(run)
    _add_source(run)
    _add_model_options(run)
    run.add_argument("--modes", help="comma separated outcome modes, e.g. rev,conv")
    run.add_argument("--partitions", type=int, help="number of data partitions")
    run.set_defaults(handler=cmd_run)

    score = sub.add_parser("score", help="per-unit ITEs and recommended arm for new data")
    score.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    score.add_argument("-q", "--quiet", action="store_true", help="warnings and errors only")
    score.add_argument("--model", required=True, help="model file written by train")
    score.add_argument("--data", required=True, help="CSV with the covariate columns")
    score.add_argument("--schema", help="JSON column roles (as written by prepare)")
    score.add_argument("--out", help="output CSV (default: scores.csv)")
    score.set_defaults(handler=cmd_score)
    return parser


def _log_level(args) -> int:
    if args.verbose:
        return logging.DEBUG
    if args.quiet:
        return logging.WARNING
    return getattr(logging, os.getenv("UPLIFT_LOG_LEVEL", "INFO").upper(), logging.INFO)


def main(argv: Optional[List[str]] = None) -> int:
    """Run one subcommand; returns the process exit code."""
    load_dotenv()
    args = build_parser().parse_args(argv)
    logging.basicConfig(format=LOG_FORMAT, level=_log_level(args))
    logging.getLogger().setLevel(_log_level(args))

    try:
        return args.handler(args)
    except UpliftError as e:
        logger.error(f"❌ {type(e).__name__}: {e}")
        sys.stderr.write(json.dumps(e.to_dict()) + "\n")
        return e.exit_code
    except Exception as e:
        logger.error("❌ Unexpected failure", exc_info=e)
        sys.stderr.write(json.dumps({"error": type(e).__name__, "message": str(e), "exit_code": 1}) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
