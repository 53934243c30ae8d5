"""Continuous dependence of the evolution VI on one perturbed data channel at a time."""

from __future__ import annotations

import logging
import math
from dataclasses import replace
from enum import Enum
from typing import Sequence

import numpy as np
from pydantic import BaseModel

from src.errors import InvalidArgument, PcurlError
from src.evolution.constrained import VIConfig
from src.evolution.data import TimeSeriesData
from src.evolution.ledger import space_time_norm
from src.evolution.stepper import Trajectory, run, run_vi
from src.limits.sweeps import SweepBase
from src.mesh.grid import CellField, FaceField, SurfaceField, _GridField
from src.mesh.operators import curl, l2_norm, leray_project, lp_norm, magnitude, random_divfree
from src.mesh.poincare import conjugate, data_exponents
from src.tasks.pool import run_ordered

logger = logging.getLogger(__name__)

CONTRACTION_TOL = 1e-8
BOUNDED_FACTOR = 3.0


class Channel(str, Enum):
    F = "f"
    G = "g"
    H0 = "h0"
    PSI = "psi"


class CDEntry(BaseModel):
    delta: float
    lhs: float
    max_l2_sq: float
    curl_gap: float
    rhs: float
    ratio: float | None


class CDReport(BaseModel):
    channel: Channel
    deltas: list[float]
    entries: list[CDEntry] = []
    fitted_constant: float | None = None
    bounded: bool | None = None
    contraction_ok: bool | None = None
    failure: str | None = None

    @property
    def passed(self) -> bool:
        return (
            self.failure is None
            and self.bounded is not False
            and self.contraction_ok is not False
        )


def _check_deltas(deltas: Sequence[float]) -> list[float]:
    values = [float(d) for d in deltas]
    if not values:
        raise InvalidArgument("delta schedule is empty")
    if any(d < 0 or not math.isfinite(d) for d in values):
        raise InvalidArgument("perturbation magnitudes must be finite and nonnegative")
    if any(b >= a for a, b in zip(values, values[1:])):
        raise InvalidArgument("perturbation magnitudes must be strictly decreasing")
    return values


def _unit(field: _GridField, p: float) -> _GridField:
    size = lp_norm(field, p)
    if size == 0:
        raise InvalidArgument("perturbation direction is zero")
    return field / size


def default_direction(channel: Channel, data: TimeSeriesData) -> _GridField | None:
    grid = data.grid
    if channel is Channel.F:
        return FaceField(grid, np.ones(grid.n_faces))
    if channel is Channel.G:
        return SurfaceField(grid, np.ones(grid.n_surface))
    if channel is Channel.H0:
        return random_divfree(grid, np.random.default_rng(0))
    return None


def perturb(
    data: TimeSeriesData, channel: Channel, delta: float, direction: _GridField | None
) -> TimeSeriesData:
    """Data with one channel moved by delta along a unit direction (Psi moves up by delta)."""
    if channel is Channel.F:
        step = delta * _unit(direction, 2.0)
        return replace(data, f=tuple(f + step for f in data.f))
    if channel is Channel.G:
        step = delta * _unit(direction, 2.0)
        return replace(data, g=tuple(g + step for g in data.g))
    if channel is Channel.H0:
        admissible = leray_project(direction)
        size = l2_norm(admissible)
        if size == 0:
            raise InvalidArgument("perturbation direction has no divergence-free part")
        moved = data.h0 + (delta / size) * admissible
        if data.psi is not None:
            m = magnitude(curl(moved))
            ratio = float(np.min(data.psi[0].data / np.maximum(m, 1e-300)))
            moved = min(1.0, ratio) * moved
        return data.with_h0(moved)
    if data.psi is None:
        raise InvalidArgument("the psi channel needs a constraint profile")
    return data.with_psi([CellField(psi.grid, psi.data + delta) for psi in data.psi])


def _channel_gap(channel: Channel, a: TimeSeriesData, b: TimeSeriesData, p: float) -> float:
    q, r = data_exponents(p)
    power = min(p / (p - 1.0), 2.0)
    steps = range(1, len(a.t_grid))
    dts = [a.dt(k) for k in steps]
    if channel is Channel.F:
        return space_time_norm([a.f[k] - b.f[k] for k in steps], dts, conjugate(q)) ** power
    if channel is Channel.G:
        return space_time_norm([a.g[k] - b.g[k] for k in steps], dts, conjugate(r)) ** power
    if channel is Channel.H0:
        return l2_norm(a.h0 - b.h0) ** 2
    assert a.psi is not None and b.psi is not None
    return max(float(np.max(np.abs(x.data - y.data))) for x, y in zip(a.psi, b.psi))


def _gaps(first: Trajectory, second: Trajectory, p: float) -> tuple[float, float]:
    data = first.data
    max_l2_sq = max(l2_norm(x - y) ** 2 for x, y in zip(first.states, second.states))
    curl_norm = (
        sum(
            data.dt(k) * lp_norm(curl(first.states[k] - second.states[k]), p) ** p
            for k in range(1, len(first))
        )
        ** (1.0 / p)
    )
    return max_l2_sq, curl_norm ** max(p, 2.0)


def _contracts(first: Trajectory, second: Trajectory, tol: float) -> bool:
    distances = [l2_norm(x - y) for x, y in zip(first.states, second.states)]
    slack = tol * max(distances[0], 1e-300)
    return all(b <= a + slack for a, b in zip(distances, distances[1:]))


def continuous_dependence_experiment(
    base: SweepBase,
    channel: Channel | str,
    deltas: Sequence[float],
    vi: VIConfig | None = None,
    direction: _GridField | None = None,
) -> CDReport:
    """Paired runs (base vs perturbed) for every delta; ratios lhs / channel gap.

    With a constraint profile the runs are evolution VIs, otherwise plain runs.
    """
    channel = Channel(channel)
    values = _check_deltas(deltas)
    data, params = base.data, base.params
    constrained = data.psi is not None
    if channel is Channel.PSI and not constrained:
        raise InvalidArgument("the psi channel needs a constraint profile")
    if channel in (Channel.F, Channel.G, Channel.H0) and direction is None:
        direction = default_direction(channel, data)
    vi = vi or VIConfig()
    # constrained steps are only accurate to the feasibility tolerance
    contraction_tol = max(CONTRACTION_TOL, vi.feasibility_tol) if constrained else CONTRACTION_TOL

    def evolve(series: TimeSeriesData) -> Trajectory:
        if constrained:
            return run_vi(series, params, base.cfg, vi)
        return run(series, params, base.cfg)

    report = CDReport(channel=channel, deltas=values)
    try:
        perturbed = [perturb(data, channel, delta, direction) for delta in values]
        reference = evolve(data)
    except PcurlError as e:
        report.failure = f"baseline: {e}"
        return report

    outcomes = run_ordered(
        [(lambda d=d: evolve(d)) for d in perturbed], concurrency=base.concurrency
    )
    contraction = True
    for delta, series, outcome in zip(values, perturbed, outcomes):
        if isinstance(outcome, BaseException):
            if not isinstance(outcome, PcurlError):
                raise outcome
            report.failure = f"delta={delta:g}: {outcome}"
            break
        max_l2_sq, curl_gap = _gaps(reference, outcome, params.p)
        lhs = max_l2_sq + curl_gap
        rhs = _channel_gap(channel, data, series, params.p)
        ratio = lhs / rhs if rhs > 0 else None
        report.entries.append(
            CDEntry(delta=delta, lhs=lhs, max_l2_sq=max_l2_sq, curl_gap=curl_gap, rhs=rhs, ratio=ratio)
        )
        if channel is Channel.H0:
            contraction = contraction and _contracts(reference, outcome, contraction_tol)
        logger.info("Channel %s, delta=%g: lhs %.4g, rhs %.4g", channel.value, delta, lhs, rhs)

    ratios = [e.ratio for e in report.entries if e.ratio is not None]
    if ratios:
        report.fitted_constant = max(ratios)
        at_largest = next(e.ratio for e in report.entries if e.ratio is not None)
        report.bounded = max(ratios) <= BOUNDED_FACTOR * at_largest if at_largest > 0 else max(ratios) == 0
    if channel is Channel.H0:
        report.contraction_ok = contraction
    return report
