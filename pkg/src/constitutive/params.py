"""Constitutive parameters: exponent, coefficient field, penalty, constraint, perturbation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Sequence

import numpy as np

from src.errors import InvalidArgument
from src.mesh.grid import CellField, GridSpec


class PerturbationKind(str, Enum):
    ZERO = "zero"
    LINEAR_SATURATING = "linear-saturating"


@dataclass(frozen=True)
class PerturbationSpec:
    """Monotone lower-order operator added to the power law.

    ``linear-saturating`` is scale * u / (1 + |u|): bounded, monotone, zero at 0.
    """

    kind: PerturbationKind = PerturbationKind.ZERO
    scale: float = 0.0

    def __post_init__(self) -> None:
        try:
            kind = PerturbationKind(self.kind)
        except ValueError as e:
            raise InvalidArgument(f"unknown perturbation kind {self.kind!r}") from e
        object.__setattr__(self, "kind", kind)
        if not (math.isfinite(self.scale) and self.scale >= 0):
            raise InvalidArgument(f"perturbation scale must be finite and >= 0, got {self.scale}")

    @property
    def active(self) -> bool:
        return self.kind is PerturbationKind.LINEAR_SATURATING and self.scale > 0


@dataclass(frozen=True, eq=False)
class ConstraintProfile:
    """Time samples of the critical profile Psi with its lower bound alpha.

    Psi stays on cells and is never averaged onto edges. The curl goes the other
    way: ``magnitude(curl(h))`` in src.mesh.operators folds each edge component onto
    the cells through ``edge_average_matrix`` (root mean square of the edges around
    a cell), and the bound is checked cell by cell against those values, as in
    ``feasibility_gap``.
    """

    psi: tuple[CellField, ...]
    alpha: float
    dpsi_dt_bound: float = 0.0

    def __post_init__(self) -> None:
        if not self.psi:
            raise InvalidArgument("constraint profile needs at least one sample")
        if not self.alpha > 0:
            raise InvalidArgument(f"alpha must be positive, got {self.alpha}")
        lowest = min(float(np.min(sample.data)) for sample in self.psi)
        if lowest < self.alpha * (1.0 - 1e-12):
            raise InvalidArgument(f"Psi drops to {lowest:.6g}, below alpha = {self.alpha:.6g}")

    @classmethod
    def from_samples(
        cls,
        psi: Sequence[CellField],
        t_grid: Sequence[float] | None = None,
        alpha: float | None = None,
    ) -> ConstraintProfile:
        samples = tuple(psi)
        if not samples:
            raise InvalidArgument("constraint profile needs at least one sample")
        if alpha is None:
            alpha = min(float(np.min(sample.data)) for sample in samples)
        bound = 0.0
        if t_grid is not None and len(samples) > 1:
            times = np.asarray(t_grid, dtype=float)
            for k in range(1, len(samples)):
                gap = float(np.max(np.abs(samples[k].data - samples[k - 1].data)))
                bound = max(bound, gap / (times[k] - times[k - 1]))
        return cls(samples, float(alpha), bound)

    def at(self, k: int) -> CellField:
        return self.psi[min(k, len(self.psi) - 1)]


@dataclass(frozen=True, eq=False)
class ConstitutiveParams:
    """Exponent p (also the n of the large-exponent limit), coefficient nu and options."""

    p: float
    nu: float | CellField = 1.0
    a_lower: float | None = None
    a_upper: float | None = None
    penalty_eps: float | None = None
    constraint: ConstraintProfile | None = None
    perturbation: PerturbationSpec = field(default_factory=PerturbationSpec)

    def __post_init__(self) -> None:
        if not (math.isfinite(self.p) and self.p > 1):
            raise InvalidArgument(f"p must exceed 1, got {self.p}")
        values = self.nu.data if isinstance(self.nu, CellField) else np.array([float(self.nu)])
        if not np.all(np.isfinite(values)) or np.min(values) <= 0:
            raise InvalidArgument("nu must be finite and strictly positive")
        low, high = float(np.min(values)), float(np.max(values))
        a_lower = low if self.a_lower is None else float(self.a_lower)
        a_upper = high if self.a_upper is None else float(self.a_upper)
        if not (0 < a_lower <= low * (1 + 1e-12) and high <= a_upper * (1 + 1e-12)):
            raise InvalidArgument(
                f"need 0 < a_* <= nu <= a^*, got a_*={a_lower}, nu in [{low}, {high}], a^*={a_upper}"
            )
        object.__setattr__(self, "a_lower", a_lower)
        object.__setattr__(self, "a_upper", a_upper)
        if self.penalty_eps is not None and not 0 < self.penalty_eps < 1:
            raise InvalidArgument(f"penalty_eps must lie in (0, 1), got {self.penalty_eps}")

    @property
    def nu_min(self) -> float:
        return float(self.a_lower)  # type: ignore[arg-type]

    @property
    def nu_max(self) -> float:
        return float(self.a_upper)  # type: ignore[arg-type]

    @property
    def p_conjugate(self) -> float:
        return self.p / (self.p - 1.0)

    def nu_cells(self, grid: GridSpec) -> np.ndarray:
        if isinstance(self.nu, CellField):
            if self.nu.grid != grid:
                raise InvalidArgument("nu lives on a different grid")
            return self.nu.data
        return np.full(grid.n_cells, float(self.nu))

    def with_exponent(self, p: float) -> ConstitutiveParams:
        return replace(self, p=float(p))

    def with_penalty(self, eps: float | None) -> ConstitutiveParams:
        return replace(self, penalty_eps=eps)

    def with_constraint(self, constraint: ConstraintProfile | None) -> ConstitutiveParams:
        return replace(self, constraint=constraint)
