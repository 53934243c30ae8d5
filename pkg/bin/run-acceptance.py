"""Run every bundled acceptance experiment and summarize the exit codes.

Usage:
    bin/run-acceptance.py                     # all configs under config/experiments
    bin/run-acceptance.py --only 05 06        # configs whose name starts with a prefix
    bin/run-acceptance.py --out runs/accept   # artifact root (one directory per config)
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

REPO_ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO_ROOT))

from src.config import AppConfig
from src.errors import ConfigError
from src.experiments.config import load_config
from src.experiments.runner import EXIT_CONFIG, run_experiment

CONFIG_DIR = REPO_ROOT / "config" / "experiments"


def main() -> int:
    parser = argparse.ArgumentParser(description="Run the acceptance experiments")
    parser.add_argument("--only", nargs="*", default=None, help="config name prefixes to run")
    parser.add_argument("--out", type=Path, default=REPO_ROOT / "runs" / "acceptance")
    args = parser.parse_args()

    config = AppConfig.from_yaml()
    logging.basicConfig(
        level=getattr(logging, config.runtime.log_level.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    paths = sorted(CONFIG_DIR.glob("*.cfg"))
    if args.only:
        paths = [p for p in paths if any(p.name.startswith(prefix) for prefix in args.only)]
    if not paths:
        print("No acceptance configs selected.")
        return 2

    failures = 0
    for path in paths:
        started = time.perf_counter()
        try:
            experiment = load_config(path)
        except ConfigError as e:
            print(f"{path.name:28s} exit {EXIT_CONFIG}  {e}")
            failures += 1
            continue
        outcome = run_experiment(
            experiment, out=args.out / path.stem, app=config, base=path.parent
        )
        elapsed = time.perf_counter() - started
        last = outcome.summary[-1] if outcome.summary else ""
        print(f"{path.name:28s} exit {outcome.exit_code}  {elapsed:7.1f}s  {last}")
        failures += outcome.exit_code != 0

    print(f"\n{len(paths) - failures}/{len(paths)} acceptance experiments passed")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
