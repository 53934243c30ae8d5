"""pcurl: command-line entry point for the p-curl solver laboratory."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import sentry_sdk

from src.config import AppConfig
from src.errors import ConfigError, ConfigIssue
from src.experiments.config import ExperimentConfig, Kind, load_config
from src.experiments.reports import schema_help
from src.experiments.runner import EXIT_CONFIG, run_experiment

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def _init_sentry(dsn: str, environment: str) -> None:
    """Initialize Sentry SDK if a DSN is configured and not in development."""
    if not dsn or environment == "development":
        return
    sentry_sdk.init(
        dsn,
        environment=environment,
        traces_sample_rate=0,
        send_client_reports=False,
        auto_session_tracking=False,
    )


def _tag_experiment(experiment: ExperimentConfig, seed: int | None) -> None:
    """Attach the experiment kind and effective seed to Sentry events from this run."""
    sentry_sdk.set_tag("experiment.kind", experiment.kind.value)
    sentry_sdk.set_tag("experiment.seed", experiment.experiment.seed if seed is None else seed)


def _seed(value: str) -> int:
    seed = int(value)
    if not 0 <= seed < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return seed


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pcurl",
        description="Discrete p-curl solver laboratory: run one experiment from a config file.",
        epilog=schema_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("kind", choices=[k.value for k in Kind], help="experiment kind")
    parser.add_argument("--config", required=True, type=Path, help="experiment config file")
    parser.add_argument("--out", type=Path, default=None, help="output directory")
    parser.add_argument("--seed", type=_seed, default=None, help="overrides [experiment] seed")
    parser.add_argument("--log-level", default=None, help="overrides runtime.log_level")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    config = AppConfig.from_yaml()
    _init_sentry(config.sentry_dsn, config.environment)

    level = (args.log_level or config.runtime.log_level).upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO), format=LOG_FORMAT)

    try:
        experiment = load_config(args.config)
        if experiment.kind.value != args.kind:
            raise ConfigError(
                [ConfigIssue(0, f"config is a {experiment.kind.value} experiment, not {args.kind}")]
            )
    except ConfigError as e:
        for issue in e.issues:
            print(f"{args.config}: {issue}", file=sys.stderr)
        return EXIT_CONFIG

    _tag_experiment(experiment, args.seed)
    outcome = run_experiment(
        experiment, out=args.out, seed=args.seed, app=config, base=args.config.parent
    )
    for line in outcome.summary:
        print(line)
    print(f"artifacts: {outcome.out_dir}")
    return outcome.exit_code


def cli_entry() -> None:
    """Console script entry point."""
    sys.exit(main())


if __name__ == "__main__":
    cli_entry()
