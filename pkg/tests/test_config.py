"""Tests for application settings loaded from YAML and the environment."""

from __future__ import annotations

import pytest

from src.config import APP_CONFIG_ENV, REPO_ROOT, AppConfig
from src.errors import ConfigError
from src.evolution.solver import StepperConfig


class TestAppConfig:
    def test_defaults(self, tmp_path):
        config = AppConfig.from_yaml(tmp_path / "absent.yml")
        assert config.solver.tolerance == 1e-9
        assert config.runtime.sweep_concurrency == 4
        assert config.output.plots

    def test_yaml_values(self, tmp_path):
        path = tmp_path / "app.yml"
        path.write_text("solver:\n  tolerance: 1.0e-6\nruntime:\n  sweep_concurrency: 2\n")
        config = AppConfig.from_yaml(path)
        assert config.solver.tolerance == 1e-6
        assert config.runtime.sweep_concurrency == 2

    def test_env_override(self, tmp_path, monkeypatch):
        monkeypatch.setenv("PCURL_SOLVER_MAX_ITERATIONS", "77")
        assert AppConfig.from_yaml(tmp_path / "absent.yml").solver.max_iterations == 77

    def test_example_file_loads(self, repo_root):
        config = AppConfig.from_yaml(repo_root / "config" / "app.example.yml")
        assert config.solver.sweep_tolerance == 1e-7

    def test_path_from_environment(self, tmp_path, monkeypatch):
        path = tmp_path / "elsewhere.yml"
        path.write_text("runtime:\n  log_level: debug\n")
        monkeypatch.setenv(APP_CONFIG_ENV, str(path))
        assert AppConfig.from_yaml().runtime.log_level == "debug"

    def test_rejects_non_mapping(self, tmp_path):
        path = tmp_path / "app.yml"
        path.write_text("- solver\n- runtime\n")
        with pytest.raises(ConfigError, match="expected a mapping"):
            AppConfig.from_yaml(path)

    def test_repo_root_holds_manifest(self):
        assert (REPO_ROOT / "pyproject.toml").exists()


class TestStepperConfigFromApp:
    def test_sweep_tolerance(self, tmp_path):
        app = AppConfig.from_yaml(tmp_path / "absent.yml")
        assert StepperConfig.from_app_config(app).tolerance == app.solver.tolerance
        swept = StepperConfig.from_app_config(app, sweep=True)
        assert swept.tolerance == app.solver.sweep_tolerance
