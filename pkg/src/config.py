"""Application settings from config/app.yml, overridden by PCURL_* environment variables."""

from __future__ import annotations

import os
from pathlib import Path
from typing import Any

import yaml
from pydantic import Field
from pydantic_settings import BaseSettings

from src.errors import ConfigError, ConfigIssue

APP_CONFIG_ENV = "PCURL_APP_CONFIG"


def _repo_root() -> Path:
    """Nearest ancestor of the package holding pyproject.toml, else the working directory."""
    for candidate in Path(__file__).resolve().parents:
        if (candidate / "pyproject.toml").exists():
            return candidate
    return Path.cwd()


REPO_ROOT = _repo_root()


class SolverSettings(BaseSettings):
    """Defaults for the projected descent used by every solve."""

    max_iterations: int = 5000
    tolerance: float = 1e-9
    sweep_tolerance: float = 1e-7
    armijo: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 60
    step_min: float = 1e-12
    step_max: float = 1e12

    model_config = {"env_prefix": "PCURL_SOLVER_"}


class RuntimeSettings(BaseSettings):
    log_level: str = "info"
    sweep_concurrency: int = 4

    model_config = {"env_prefix": "PCURL_RUNTIME_"}


class OutputSettings(BaseSettings):
    output_dir: Path = REPO_ROOT / "runs"
    plots: bool = True
    snapshots: bool = True

    model_config = {"env_prefix": "PCURL_OUTPUT_"}


class AppConfig(BaseSettings):
    """Top-level application configuration."""

    solver: SolverSettings = Field(default_factory=SolverSettings)
    runtime: RuntimeSettings = Field(default_factory=RuntimeSettings)
    output: OutputSettings = Field(default_factory=OutputSettings)

    # Environment & Sentry
    environment: str = "development"
    sentry_dsn: str = ""

    # Paths
    config_dir: Path = REPO_ROOT / "config"

    model_config = {"env_prefix": "PCURL_"}

    @classmethod
    def from_yaml(cls, path: Path | None = None) -> AppConfig:
        """Load config/app.yml (or $PCURL_APP_CONFIG), then apply env var overrides."""
        if path is None:
            path = Path(os.environ.get(APP_CONFIG_ENV) or REPO_ROOT / "config" / "app.yml")

        values: dict[str, Any] = {}
        if path.exists():
            with open(path) as f:
                values = yaml.safe_load(f) or {}
        if not isinstance(values, dict):
            raise ConfigError([ConfigIssue(0, f"{path}: expected a mapping of settings groups")])

        return cls(**values)
