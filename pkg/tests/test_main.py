"""Tests for the pcurl command-line entry point."""

from __future__ import annotations

import pytest

from src.experiments.config import parse_config
from src.experiments.runner import EXIT_CONFIG, EXIT_OK
from src.main import build_parser, main

EVOLVE = """\
[experiment]
kind = evolve

[grid]
cells = 3, 3, 3

[params]
p = 2

[data]
steps = 2
"""


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "evolve.cfg"
    path.write_text(EVOLVE)
    return path


@pytest.fixture
def sentry_tags(monkeypatch) -> dict[str, object]:
    tags: dict[str, object] = {}
    monkeypatch.setattr("src.main.sentry_sdk.set_tag", lambda key, value: tags.update({key: value}))
    return tags


@pytest.fixture(autouse=True)
def _no_plots(monkeypatch):
    monkeypatch.setenv("PCURL_OUTPUT_PLOTS", "false")


class TestParser:
    def test_rejects_unknown_kind(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["explode", "--config", "x.cfg"])

    def test_rejects_negative_seed(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["evolve", "--config", "x.cfg", "--seed", "-1"])

    def test_help_lists_csv_schemas(self):
        assert "index.csv" in build_parser().format_help()


class TestMain:
    def test_runs_experiment(self, config_file, tmp_path, capsys):
        out = tmp_path / "out"
        assert main(["evolve", "--config", str(config_file), "--out", str(out)]) == EXIT_OK
        assert (out / "index.csv").exists()
        assert "artifacts:" in capsys.readouterr().out

    def test_kind_mismatch(self, config_file, capsys):
        assert main(["decay", "--config", str(config_file)]) == EXIT_CONFIG
        assert "not decay" in capsys.readouterr().err

    def test_invalid_config_lists_issues(self, tmp_path, capsys):
        path = tmp_path / "bad.cfg"
        path.write_text(EVOLVE + "colour = blue\n")
        assert main(["evolve", "--config", str(path)]) == EXIT_CONFIG
        assert "line 12: unknown key data.colour" in capsys.readouterr().err

    def test_tags_sentry_with_kind_and_seed(self, config_file, tmp_path, sentry_tags):
        args = ["evolve", "--config", str(config_file), "--out", str(tmp_path / "out")]
        assert main([*args, "--seed", "9"]) == EXIT_OK
        assert sentry_tags == {"experiment.kind": "evolve", "experiment.seed": 9}

    def test_config_seed_tagged_without_override(self, config_file, tmp_path, sentry_tags):
        main(["evolve", "--config", str(config_file), "--out", str(tmp_path / "out")])
        assert sentry_tags["experiment.seed"] == parse_config(EVOLVE).experiment.seed
