"""Time-sampled data of an evolution run."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from src.errors import InvalidArgument
from src.mesh.grid import CellField, FaceField, GridSpec, SurfaceField
from src.mesh.operators import curl, div, magnitude

DIVERGENCE_TOL = 1e-10
FEASIBILITY_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class StepData:
    """Sources at one time node."""

    t: float
    f: FaceField
    g: SurfaceField
    psi: CellField | None = None

    @property
    def grid(self) -> GridSpec:
        return self.f.grid


def divergence_defect(h: FaceField) -> float:
    """max |div h| relative to the field's own difference scale."""
    scale = 1.0 + float(np.max(np.abs(h.data), initial=0.0)) / min(h.grid.dx)
    return float(np.max(np.abs(div(h).data), initial=0.0)) / scale


def check_admissible(h: FaceField, what: str = "field") -> None:
    if divergence_defect(h) > DIVERGENCE_TOL:
        raise InvalidArgument(f"{what} is not divergence-free (defect {divergence_defect(h):.3e})")
    if h.boundary_max() > DIVERGENCE_TOL * (1.0 + float(np.max(np.abs(h.data), initial=0.0))):
        raise InvalidArgument(f"{what} has a nonzero normal component on the boundary")


def feasibility_gap(h: FaceField, psi: CellField) -> float:
    """max over cells of (|curl h| - Psi) / Psi, clipped at 0."""
    m = magnitude(curl(h))
    return max(0.0, float(np.max((m - psi.data) / psi.data, initial=0.0)))


@dataclass(frozen=True, eq=False)
class TimeSeriesData:
    """Sources f (faces), g (surface) and optional Psi (cells) on the nodes of t_grid."""

    t_grid: tuple[float, ...]
    f: tuple[FaceField, ...]
    g: tuple[SurfaceField, ...]
    h0: FaceField
    psi: tuple[CellField, ...] | None = None

    def __post_init__(self) -> None:
        times = tuple(float(t) for t in self.t_grid)
        object.__setattr__(self, "t_grid", times)
        object.__setattr__(self, "f", tuple(self.f))
        object.__setattr__(self, "g", tuple(self.g))
        if self.psi is not None:
            object.__setattr__(self, "psi", tuple(self.psi))

        if not times or times[0] < 0 or not all(math.isfinite(t) for t in times):
            raise InvalidArgument("t_grid must be finite and start at t >= 0")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise InvalidArgument("t_grid must be strictly increasing")
        n = len(times)
        if len(self.f) != n or len(self.g) != n:
            raise InvalidArgument(f"need {n} samples of f and g, got {len(self.f)} and {len(self.g)}")
        if self.psi is not None and len(self.psi) != n:
            raise InvalidArgument(f"need {n} samples of Psi, got {len(self.psi)}")

        grid = self.h0.grid
        fields = list(self.f) + list(self.g) + list(self.psi or ())
        if any(field.grid != grid for field in fields):
            raise InvalidArgument("all data must live on the grid of h0")
        check_admissible(self.h0, "h0")
        if self.psi is not None:
            if min(float(np.min(p.data)) for p in self.psi) <= 0:
                raise InvalidArgument("Psi must be strictly positive")
            gap = feasibility_gap(self.h0, self.psi[0])
            if gap > FEASIBILITY_TOL:
                raise InvalidArgument(f"h0 violates |curl h0| <= Psi(0) by {gap:.3e} (relative)")

    @classmethod
    def stationary(
        cls,
        t_grid: Sequence[float],
        f: FaceField,
        g: SurfaceField,
        h0: FaceField,
        psi: CellField | None = None,
    ) -> TimeSeriesData:
        n = len(t_grid)
        return cls(
            tuple(t_grid),
            (f,) * n,
            (g,) * n,
            h0,
            None if psi is None else (psi,) * n,
        )

    @property
    def grid(self) -> GridSpec:
        return self.h0.grid

    @property
    def steps(self) -> int:
        return len(self.t_grid) - 1

    @property
    def horizon(self) -> float:
        return self.t_grid[-1] - self.t_grid[0]

    def dt(self, k: int) -> float:
        """Length of the step ending at node k."""
        return self.t_grid[k] - self.t_grid[k - 1]

    def at(self, k: int) -> StepData:
        psi = None if self.psi is None else self.psi[k]
        return StepData(self.t_grid[k], self.f[k], self.g[k], psi)

    def with_h0(self, h0: FaceField) -> TimeSeriesData:
        return replace(self, h0=h0)

    def with_psi(self, psi: Sequence[CellField] | None) -> TimeSeriesData:
        return replace(self, psi=None if psi is None else tuple(psi))

    def scaled(self, f_scale: float = 1.0, g_scale: float = 1.0) -> TimeSeriesData:
        return replace(
            self,
            f=tuple(f_scale * f for f in self.f),
            g=tuple(g_scale * g for g in self.g),
        )
