"""Experiment config files: ``[section]`` headers, ``key = value`` lines, ``#`` comments.

Sections are validated by pydantic models that forbid unknown keys; every
issue is reported with the line it comes from.
"""

from __future__ import annotations

import logging
import math
from enum import Enum
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from src.errors import ConfigError, ConfigIssue

logger = logging.getLogger(__name__)

LIST_FIELDS = {
    "extents",
    "cells",
    "eps_schedule",
    "n_schedule",
    "delta_schedule",
    "q_probes",
    "p_values",
}


class Kind(str, Enum):
    EVOLVE = "evolve"
    STATIONARY = "stationary"
    DECAY = "decay"
    PLIMIT = "plimit"
    PENALTY_SWEEP = "penalty-sweep"
    CDEP = "cdep"
    VERIFY = "verify"
    ORACLE_COMPARE = "oracle-compare"


class Preset(str, Enum):
    ZERO = "zero"
    UNIFORM = "uniform"
    MODE = "mode"
    RANDOM = "random"


class TimeProfile(str, Enum):
    STEADY = "steady"
    DECAYING = "decaying"
    RELAXING = "relaxing"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")

    @field_validator("*", mode="before")
    @classmethod
    def _split_lists(cls, value: Any, info) -> Any:
        if info.field_name in LIST_FIELDS and isinstance(value, str):
            return [item.strip() for item in value.split(",") if item.strip()]
        if isinstance(value, str) and value.strip().lower() in ("none", ""):
            return None
        return value


class ExperimentSection(_Section):
    kind: Kind
    seed: int = Field(default=0, ge=0, lt=2**64)
    output: Path | None = None
    samples: int = Field(default=100_000, ge=1)
    concurrency: int | None = Field(default=None, ge=1)


class GridSection(_Section):
    extents: list[float] = [1.0, 1.0, 1.0]
    cells: list[int]

    @field_validator("extents")
    @classmethod
    def _extents(cls, value: list[float]) -> list[float]:
        if len(value) != 3 or not all(math.isfinite(e) and e > 0 for e in value):
            raise ValueError("extents must be three positive reals")
        return value

    @field_validator("cells")
    @classmethod
    def _cells(cls, value: list[int]) -> list[int]:
        if len(value) != 3 or min(value) < 2:
            raise ValueError("cells must be three integers >= 2")
        return value


class ParamsSection(_Section):
    p: float
    nu: float = 1.0
    penalty_eps: float | None = None
    perturbation: str = "zero"
    perturbation_scale: float = 0.0

    @field_validator("p")
    @classmethod
    def _p(cls, value: float) -> float:
        if not (math.isfinite(value) and value > 1):
            raise ValueError("p must exceed 1")
        return value

    @field_validator("nu")
    @classmethod
    def _nu(cls, value: float) -> float:
        if not (math.isfinite(value) and value > 0):
            raise ValueError("nu must be positive")
        return value

    @field_validator("penalty_eps")
    @classmethod
    def _eps(cls, value: float | None) -> float | None:
        if value is not None and not 0 < value < 1:
            raise ValueError("penalty_eps must lie in (0, 1)")
        return value


class DataSection(_Section):
    f: Preset = Preset.ZERO
    f_amplitude: float = 1.0
    f_time: TimeProfile = TimeProfile.STEADY
    f_file: Path | None = None
    g: Preset = Preset.ZERO
    g_amplitude: float = 1.0
    g_time: TimeProfile = TimeProfile.STEADY
    g_file: Path | None = None
    h0: Preset = Preset.ZERO
    h0_amplitude: float = 1.0
    h0_file: Path | None = None
    psi: Preset | None = None
    psi_level: float = 1.0
    psi_amplitude: float = 0.5
    psi_time: TimeProfile = TimeProfile.STEADY
    psi_file: Path | None = None
    t_final: float = Field(default=1.0, gt=0)
    steps: int = Field(default=10, ge=1)
    dt_refine: bool = False

    @field_validator("psi_level")
    @classmethod
    def _level(cls, value: float) -> float:
        if not value > 0:
            raise ValueError("psi_level must be positive")
        return value

    @field_validator("psi_amplitude")
    @classmethod
    def _psi_amplitude(cls, value: float) -> float:
        if not 0 <= value < 1:
            raise ValueError("psi_amplitude must lie in [0, 1)")
        return value

    @field_validator("psi_time")
    @classmethod
    def _psi_time(cls, value: TimeProfile) -> TimeProfile:
        if value is TimeProfile.DECAYING:
            raise ValueError("Psi must stay positive; use steady or relaxing")
        return value

    @property
    def constrained(self) -> bool:
        return self.psi is not None or self.psi_file is not None


class SolverSection(_Section):
    max_iterations: int | None = Field(default=None, ge=1)
    tolerance: float | None = Field(default=None, gt=0)
    armijo: float | None = Field(default=None, gt=0, le=0.5)
    backtrack: float | None = Field(default=None, gt=0, lt=1)
    max_backtracks: int | None = Field(default=None, ge=1)
    feasibility_tol: float | None = Field(default=None, gt=0)
    max_shift_rounds: int | None = Field(default=None, ge=0)
    oracle_tol: float = Field(default=1e-9, gt=0)

    def overrides(self) -> dict[str, Any]:
        keys = ("max_iterations", "tolerance", "armijo", "backtrack", "max_backtracks")
        return {key: getattr(self, key) for key in keys if getattr(self, key) is not None}


class SchedulesSection(_Section):
    eps_schedule: list[float] | None = None
    n_schedule: list[float] | None = None
    delta_schedule: list[float] | None = None
    q_probes: list[float] = [4.0]
    p_values: list[float] | None = None

    @field_validator("eps_schedule")
    @classmethod
    def _eps(cls, value: list[float] | None) -> list[float] | None:
        if value is None:
            return value
        if not value or any(not 0 < e < 1 for e in value):
            raise ValueError("eps_schedule entries must lie in (0, 1)")
        if any(b >= a for a, b in zip(value, value[1:])):
            raise ValueError("eps_schedule must be strictly decreasing")
        return value

    @field_validator("n_schedule")
    @classmethod
    def _n(cls, value: list[float] | None) -> list[float] | None:
        if value is not None and any(b <= a for a, b in zip(value, value[1:])):
            raise ValueError("n_schedule must be strictly increasing")
        return value

    @field_validator("delta_schedule")
    @classmethod
    def _delta(cls, value: list[float] | None) -> list[float] | None:
        if value is None:
            return value
        if any(d < 0 for d in value):
            raise ValueError("delta_schedule entries must be nonnegative")
        if any(b >= a for a, b in zip(value, value[1:])):
            raise ValueError("delta_schedule must be strictly decreasing")
        return value

    @field_validator("p_values")
    @classmethod
    def _p_values(cls, value: list[float] | None) -> list[float] | None:
        if value is not None and any(not p > 1 for p in value):
            raise ValueError("p must exceed 1")
        return value


class DecaySection(_Section):
    floor: float = Field(default=1e-12, ge=0)
    final_tol: float = Field(default=1e-4, gt=0)
    horizon_factor: float = Field(default=1.0, gt=0)
    poincare: float | None = Field(default=None, gt=0)


class CdepSection(_Section):
    channel: str = "psi"

    @field_validator("channel")
    @classmethod
    def _channel(cls, value: str) -> str:
        if value not in ("f", "g", "h0", "psi"):
            raise ValueError("channel must be one of f, g, h0, psi")
        return value


class ExperimentConfig(_Section):
    experiment: ExperimentSection
    grid: GridSection
    params: ParamsSection
    data: DataSection = Field(default_factory=DataSection)
    solver: SolverSection = Field(default_factory=SolverSection)
    schedules: SchedulesSection = Field(default_factory=SchedulesSection)
    decay: DecaySection = Field(default_factory=DecaySection)
    cdep: CdepSection = Field(default_factory=CdepSection)

    @property
    def kind(self) -> Kind:
        return self.experiment.kind

    def echo(self) -> dict[str, Any]:
        return self.model_dump(mode="json")


# ── parsing ──────────────────────────────────────────────────────────────────


class _Parsed:
    def __init__(self) -> None:
        self.values: dict[str, dict[str, str]] = {}
        self.lines: dict[tuple[str, ...], int] = {}
        self.issues: list[ConfigIssue] = []

    def line_for(self, loc: tuple[Any, ...]) -> int:
        for size in range(min(len(loc), 2), 0, -1):
            key = tuple(str(part) for part in loc[:size])
            if key in self.lines:
                return self.lines[key]
        return 0


def _scan(text: str) -> _Parsed:
    parsed = _Parsed()
    section: str | None = None
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section in parsed.values:
                parsed.issues.append(ConfigIssue(number, f"duplicate section [{section}]"))
            parsed.values.setdefault(section, {})
            parsed.lines[(section,)] = number
            continue
        if "=" not in line:
            parsed.issues.append(ConfigIssue(number, f"expected 'key = value', got {line!r}"))
            continue
        if section is None:
            parsed.issues.append(ConfigIssue(number, "key outside of any [section]"))
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        if key in parsed.values[section]:
            parsed.issues.append(ConfigIssue(number, f"duplicate key {key!r} in [{section}]"))
        parsed.values[section][key] = value
        parsed.lines[(section, key)] = number
    return parsed


def _message(error: dict[str, Any]) -> str:
    loc = ".".join(str(part) for part in error["loc"])
    text = error["msg"].removeprefix("Value error, ")
    if error["type"] == "missing":
        if len(error["loc"]) == 1:
            return f"missing required section [{loc}]"
        return f"missing required key {loc}"
    if error["type"] == "extra_forbidden":
        return f"unknown key {loc}" if len(error["loc"]) > 1 else f"unknown section [{loc}]"
    return f"{loc}: {text}" if loc else text


def _require(config: ExperimentConfig, parsed: _Parsed) -> list[ConfigIssue]:
    """Kind-specific requirements that a single section cannot express."""
    kind = config.kind
    kind_line = parsed.lines.get(("experiment", "kind"), 0)
    schedules_line = parsed.lines.get(("schedules",), kind_line)
    issues: list[ConfigIssue] = []

    def need(value: Any, key: str, line: int) -> None:
        if value is None:
            issues.append(ConfigIssue(line, f"missing required key {key} for kind {kind.value}"))

    if kind is Kind.PENALTY_SWEEP:
        need(config.schedules.eps_schedule, "schedules.eps_schedule", schedules_line)
        if not config.data.constrained:
            issues.append(ConfigIssue(kind_line, "penalty-sweep needs a constraint (data.psi)"))
    if kind is Kind.PLIMIT:
        need(config.schedules.n_schedule, "schedules.n_schedule", schedules_line)
    if kind is Kind.CDEP:
        need(config.schedules.delta_schedule, "schedules.delta_schedule", schedules_line)
        if config.cdep.channel == "psi" and not config.data.constrained:
            line = parsed.lines.get(("cdep", "channel"), kind_line)
            issues.append(ConfigIssue(line, "the psi channel needs a constraint (data.psi)"))
    if kind is Kind.ORACLE_COMPARE:
        cells = config.grid.cells
        if len(cells) == 3:
            faces = sum(
                (cells[a] + 1) * cells[(a + 1) % 3] * cells[(a + 2) % 3] for a in range(3)
            )
            if faces > 4000:
                line = parsed.lines.get(("grid", "cells"), 0)
                message = f"oracle-compare is limited to 4000 faces, got {faces}"
                issues.append(ConfigIssue(line, message))
    if config.params.penalty_eps is not None and not config.data.constrained:
        line = parsed.lines.get(("params", "penalty_eps"), 0)
        issues.append(ConfigIssue(line, "penalty_eps needs a constraint (data.psi)"))
    return issues


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate; raises ConfigError listing every issue found."""
    parsed = _scan(text)
    issues = list(parsed.issues)
    config: ExperimentConfig | None = None
    try:
        config = ExperimentConfig.model_validate(parsed.values)
    except ValidationError as e:
        for error in e.errors():
            loc = tuple(error["loc"])
            issues.append(ConfigIssue(parsed.line_for(loc), _message(error)))
    if config is not None:
        issues.extend(_require(config, parsed))
    if issues:
        issues.sort(key=lambda issue: issue.line)
        raise ConfigError(issues)
    assert config is not None
    logger.debug("Parsed %s experiment config", config.kind.value)
    return config


def load_config(path: Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError([ConfigIssue(0, f"cannot read {path}: {e}")]) from e
    return parse_config(text)
