"""Constraint violation measures and the rescaling between constraint sets."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, overload

import numpy as np

from src.constitutive.laws import safe_power
from src.errors import InvalidArgument
from src.mesh.grid import CellField, FaceField
from src.mesh.operators import curl, magnitude, random_divfree

FEASIBILITY_SLACK = 1e-9


@dataclass(frozen=True)
class Violation:
    """Time-integrated L1 norms of (|curl h| - Psi)+ and (|curl h|^p - Psi^p)+."""

    linear: float
    power: float


def constraint_violation(
    states: Sequence[FaceField],
    psi: Sequence[CellField],
    p: float,
    dts: Sequence[float] | None = None,
) -> Violation:
    """Sum over nodes of dt_k * int (|curl h_k| - Psi_k)+ (and the p-th power form).

    ``dts`` defaults to unit weights; trajectories pass the right-endpoint step lengths.
    """
    if len(states) != len(psi):
        raise InvalidArgument(f"{len(states)} states but {len(psi)} constraint samples")
    weights = [1.0] * len(states) if dts is None else list(dts)
    if len(weights) != len(states):
        raise InvalidArgument("need one time weight per state")
    linear = power = 0.0
    for h, bound, dt in zip(states, psi, weights):
        if h.grid != bound.grid:
            raise InvalidArgument("state and Psi live on different grids")
        m = magnitude(curl(h))
        volume = h.grid.cell_volume
        linear += dt * volume * float(np.sum(np.maximum(m - bound.data, 0.0)))
        power += dt * volume * float(
            np.sum(np.maximum(safe_power(m, p) - safe_power(bound.data, p), 0.0))
        )
    return Violation(linear, power)


def rescale_factor(psi1: CellField, psi2: CellField, alpha: float | None = None) -> float:
    """eta = alpha / (alpha + beta) with beta = max |psi1 - psi2|."""
    if psi1.grid != psi2.grid:
        raise InvalidArgument("psi1 and psi2 live on different grids")
    low = float(np.min(psi2.data))
    alpha = low if alpha is None else float(alpha)
    if not alpha > 0:
        raise InvalidArgument(f"alpha must be positive, got {alpha}")
    if low < alpha * (1.0 - 1e-12):
        raise InvalidArgument(f"psi2 drops to {low:.6g}, below alpha = {alpha:.6g}")
    beta = float(np.max(np.abs(psi1.data - psi2.data)))
    return alpha / (alpha + beta)


def _rescale_one(h1: FaceField, psi1: CellField, psi2: CellField, alpha: float | None) -> FaceField:
    if h1.grid != psi1.grid:
        raise InvalidArgument("h1 and psi1 live on different grids")
    m = magnitude(curl(h1))
    excess = float(np.max(m / psi1.data - 1.0, initial=-math.inf))
    if excess > FEASIBILITY_SLACK:
        raise InvalidArgument(f"h1 violates |curl h1| <= psi1 by {excess:.3e} (relative)")
    return rescale_factor(psi1, psi2, alpha) * h1


@overload
def rescale_to_feasible(
    h1: FaceField, psi1: CellField, psi2: CellField, alpha: float | None = None
) -> FaceField: ...


@overload
def rescale_to_feasible(
    h1: Sequence[FaceField],
    psi1: Sequence[CellField],
    psi2: Sequence[CellField],
    alpha: float | None = None,
) -> list[FaceField]: ...


def rescale_to_feasible(h1, psi1, psi2, alpha=None):
    """Map a field feasible for psi1 into the set of psi2 by scaling with eta(t)."""
    if isinstance(h1, FaceField):
        return _rescale_one(h1, psi1, psi2, alpha)
    if not (len(h1) == len(psi1) == len(psi2)):
        raise InvalidArgument("series lengths differ")
    return [_rescale_one(h, a, b, alpha) for h, a, b in zip(h1, psi1, psi2)]


def feasible_test_fields(
    psi: CellField, count: int, rng: np.random.Generator
) -> list[FaceField]:
    """Random divergence-free fields rescaled into {|curl v| <= psi}."""
    fields = []
    alpha = float(np.min(psi.data))
    for _ in range(count):
        v = random_divfree(psi.grid, rng)
        top = float(np.max(magnitude(curl(v)), initial=0.0))
        if top == 0.0:
            fields.append(v)
            continue
        fields.append(rescale_to_feasible(v, CellField.constant(psi.grid, top), psi, alpha))
    return fields
