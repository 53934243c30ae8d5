"""Exception hierarchy shared by the solver modules and the CLI."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any


class PcurlError(Exception):
    """Base class for every error raised by the laboratory."""


class InvalidArgument(PcurlError, ValueError):
    """A precondition on an argument does not hold."""


class NumericFailure(PcurlError, RuntimeError):
    """A numerical procedure did not reach its target.

    Carries whatever the failing stage knew when it gave up, so drivers can
    attach their own position (step index, schedule entry) and re-raise.
    """

    def __init__(
        self,
        message: str,
        *,
        residual: float | None = None,
        iterations: int | None = None,
        position: Any = None,
        trace: list[float] | None = None,
    ):
        super().__init__(message)
        self.message = message
        self.residual = residual
        self.iterations = iterations
        self.position = position
        self.trace = trace or []

    def at(self, position: Any) -> NumericFailure:
        """Return a copy of this failure tagged with ``position``."""
        where = position if self.position is None else f"{position} / {self.position}"
        return NumericFailure(
            self.message,
            residual=self.residual,
            iterations=self.iterations,
            position=where,
            trace=self.trace,
        )

    def __str__(self) -> str:
        parts = [self.message]
        if self.position is not None:
            parts.append(f"at {self.position}")
        if self.residual is not None:
            parts.append(f"residual={self.residual:.3e}")
        if self.iterations is not None:
            parts.append(f"iterations={self.iterations}")
        return " ".join(parts)


@dataclass
class ConfigIssue:
    line: int  # 0 when the issue is not tied to a line
    message: str

    def __str__(self) -> str:
        return f"line {self.line}: {self.message}" if self.line else self.message


class ConfigError(PcurlError, ValueError):
    """An experiment config failed validation; lists every issue found."""

    def __init__(self, issues: list[ConfigIssue]):
        self.issues = issues
        super().__init__("; ".join(str(issue) for issue in issues))
