"""Tests for experiment config parsing and validation."""

from __future__ import annotations

import pytest

from src.errors import ConfigError
from src.experiments.config import Kind, Preset, load_config, parse_config

MINIMAL = """\
[experiment]
kind = evolve

[grid]
cells = 3, 3, 3

[params]
p = 2
"""


def _issues(text: str) -> list:
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    return exc.value.issues


class TestParseConfig:
    def test_minimal(self):
        config = parse_config(MINIMAL)
        assert config.kind is Kind.EVOLVE
        assert config.grid.cells == [3, 3, 3]
        assert config.grid.extents == [1.0, 1.0, 1.0]
        assert config.params.p == 2.0
        assert config.data.f is Preset.ZERO
        assert not config.data.constrained

    def test_comments_and_blank_lines(self):
        text = "# header\n\n" + MINIMAL.replace("p = 2", "p = 3  # cubic")
        assert parse_config(text).params.p == 3.0

    def test_comma_lists(self):
        text = MINIMAL + "\n[schedules]\neps_schedule = 0.5, 0.2 ,0.1\n"
        assert parse_config(text).schedules.eps_schedule == [0.5, 0.2, 0.1]

    def test_none_values(self):
        text = MINIMAL + "\n[solver]\ntolerance = none\n"
        assert parse_config(text).solver.tolerance is None

    def test_echo_is_json_ready(self):
        echo = parse_config(MINIMAL).echo()
        assert echo["experiment"]["kind"] == "evolve"

    def test_solver_overrides(self):
        text = MINIMAL + "\n[solver]\ntolerance = 1e-8\nmax_iterations = 50\n"
        assert parse_config(text).solver.overrides() == {"max_iterations": 50, "tolerance": 1e-8}


class TestConfigIssues:
    def test_unknown_key_reports_line(self):
        issues = _issues(MINIMAL + "colour = blue\n")
        assert len(issues) == 1
        assert issues[0].line == 9
        assert "unknown key params.colour" in issues[0].message

    def test_unknown_section(self):
        issues = _issues(MINIMAL + "\n[extras]\na = 1\n")
        assert any("unknown section [extras]" in issue.message for issue in issues)

    def test_duplicate_key(self):
        issues = _issues(MINIMAL + "p = 3\n")
        assert issues[0].line == 9
        assert "duplicate key 'p'" in issues[0].message

    def test_duplicate_section(self):
        issues = _issues(MINIMAL + "\n[params]\nnu = 2\n")
        assert any("duplicate section [params]" in issue.message for issue in issues)

    def test_missing_section(self):
        issues = _issues("[experiment]\nkind = evolve\n\n[params]\np = 2\n")
        assert any("missing required section [grid]" in issue.message for issue in issues)

    def test_key_outside_section(self):
        issues = _issues("p = 2\n" + MINIMAL)
        assert issues[0].line == 1

    def test_line_without_equals(self):
        issues = _issues(MINIMAL + "just words\n")
        assert "expected 'key = value'" in issues[0].message

    def test_every_issue_reported_in_line_order(self):
        text = MINIMAL.replace("p = 2", "p = 0.5").replace("3, 3, 3", "1, 3, 3")
        issues = _issues(text)
        assert [issue.line for issue in issues] == sorted(issue.line for issue in issues)
        assert len(issues) == 2

    @pytest.mark.parametrize(
        "extra",
        [
            "\n[schedules]\neps_schedule = 0.1, 0.2\n",
            "\n[schedules]\neps_schedule = 0.5, 1.5\n",
            "\n[schedules]\nn_schedule = 8, 4\n",
            "\n[schedules]\ndelta_schedule = 0.1, -0.2\n",
            "\n[data]\npsi = uniform\npsi_time = decaying\n",
            "\n[data]\npsi_amplitude = 1.0\n",
            "\n[data]\nsteps = 0\n",
            "\n[experiment]\n",
        ],
    )
    def test_rejects(self, extra):
        assert _issues(MINIMAL + extra)

    def test_unknown_kind(self):
        assert _issues(MINIMAL.replace("evolve", "explode"))


class TestKindRequirements:
    def test_penalty_sweep_needs_schedule_and_constraint(self):
        text = MINIMAL.replace("evolve", "penalty-sweep")
        messages = [issue.message for issue in _issues(text)]
        assert any("schedules.eps_schedule" in message for message in messages)
        assert any("needs a constraint" in message for message in messages)

    def test_plimit_needs_n_schedule(self):
        issues = _issues(MINIMAL.replace("evolve", "plimit"))
        assert "schedules.n_schedule" in issues[0].message

    def test_cdep_psi_channel_needs_constraint(self):
        text = MINIMAL.replace("evolve", "cdep") + "\n[schedules]\ndelta_schedule = 0.1, 0.05\n"
        issues = _issues(text)
        assert any("psi channel" in issue.message for issue in issues)
        config = parse_config(text + "\n[cdep]\nchannel = f\n")
        assert config.cdep.channel == "f"

    def test_oracle_face_limit(self):
        text = MINIMAL.replace("evolve", "oracle-compare").replace("3, 3, 3", "12, 12, 12")
        issues = _issues(text)
        assert issues[0].line == 5
        assert "4000 faces" in issues[0].message

    def test_penalty_needs_constraint(self):
        assert _issues(MINIMAL + "penalty_eps = 0.1\n")
        text = MINIMAL + "penalty_eps = 0.1\n\n[data]\npsi = uniform\n"
        assert parse_config(text).params.penalty_eps == 0.1


class TestShippedConfigs:
    def test_all_parse(self, repo_root):
        paths = sorted((repo_root / "config" / "experiments").glob("*.cfg"))
        assert paths
        for path in paths:
            assert load_config(path).kind in Kind

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError) as exc:
            load_config(tmp_path / "absent.cfg")
        assert exc.value.issues[0].line == 0
