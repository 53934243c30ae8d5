"""The large-exponent sweep toward the critical-state limit and the penalty sweep."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.constitutive.laws import penalty_k, safe_power
from src.constitutive.params import ConstitutiveParams
from src.errors import InvalidArgument, NumericFailure, PcurlError
from src.evolution.data import TimeSeriesData, feasibility_gap
from src.evolution.solver import StepperConfig, solve_step
from src.evolution.stepper import Trajectory, node_data, run
from src.limits.feasibility import constraint_violation
from src.mesh.grid import CellField, FaceField
from src.mesh.operators import curl, l2_norm, location_weights, lp_norm, magnitude, weighted_lp
from src.tasks.pool import run_ordered

logger = logging.getLogger(__name__)

N_CAP = 64.0
SATURATION_TOL = 0.1
PRECHECK_EPS = 0.05


@dataclass(frozen=True, eq=False)
class SweepBase:
    """Everything a sweep entry needs besides the swept parameter."""

    data: TimeSeriesData
    params: ConstitutiveParams
    cfg: StepperConfig
    concurrency: int = 4

    @property
    def space_time_volume(self) -> float:
        return self.data.grid.volume * self.data.horizon

    @property
    def dts(self) -> list[float]:
        return [self.data.dt(k) for k in range(1, len(self.data.t_grid))]


def curl_space_time_norm(trajectory: Trajectory, q: float) -> float:
    """||curl h||_{L^q(Q_T)} with right-endpoint time weights."""
    data = trajectory.data
    states = trajectory.states[1:]
    if not states:
        return 0.0
    values = np.concatenate([magnitude(curl(h)) for h in states])
    weights = np.concatenate(
        [data.dt(k) * location_weights(curl(h)) for k, h in enumerate(states, start=1)]
    )
    return weighted_lp(values, weights, q)


def max_state_distance(a: Trajectory, b: Trajectory) -> float:
    return max(l2_norm(x - y) for x, y in zip(a.states, b.states))


def nonincreasing_with_reversal(
    values: Sequence[float], max_reversals: int = 1, reversal_size: float = math.inf
) -> bool:
    """True if values never rise except for up to ``max_reversals`` rises of relative size <= reversal_size."""
    reversals = 0
    for previous, current in zip(values, values[1:]):
        if current <= previous * (1.0 + 1e-12) + 1e-300:
            continue
        reversals += 1
        if reversals > max_reversals or current > previous * (1.0 + reversal_size):
            return False
    return True


# ── large-exponent sweep ─────────────────────────────────────────────────────


class PLimitEntry(BaseModel):
    n: float
    max_curl: float
    endpoint_max_curl: float
    lq_norms: dict[str, float]
    holder_trend: dict[str, float]
    ln_norm: float
    cauchy_distance: float | None


class PLimitReport(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    n_schedule: list[float]
    q_probes: list[float]
    space_time_volume: float
    precheck_ok: bool
    entries: list[PLimitEntry] = []
    failure: str | None = None
    saturated: bool | None = None
    endpoints: dict[float, FaceField] = Field(default_factory=dict, exclude=True)

    @property
    def complete(self) -> bool:
        return self.failure is None and len(self.entries) == len(self.n_schedule)


def _check_n_schedule(schedule: Sequence[float], p: float) -> list[float]:
    ns = [float(n) for n in schedule]
    if not ns:
        raise InvalidArgument("n_schedule is empty")
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise InvalidArgument("n_schedule must be strictly increasing")
    if ns[-1] > N_CAP:
        raise InvalidArgument(f"n_schedule is capped at {N_CAP:g}, got {ns[-1]:g}")
    floor = max(3.0, p)
    for index, n in enumerate(ns):
        if index == 0 and math.isclose(n, p):
            continue
        if n <= floor:
            raise InvalidArgument(f"n = {n:g} must exceed max(3, p) = {floor:g}")
    return ns


def _precheck(base: SweepBase) -> str | None:
    """Reason the data admit no candidate with |curl h| <= 1, or None."""
    grid = base.data.grid
    ones = CellField.constant(grid, 1.0)
    gap = feasibility_gap(base.data.h0, ones)
    if gap > 1e-9:
        return f"h0 violates |curl h0| <= 1 by {gap:.3e}"
    step = replace(node_data(base.data, base.params, base.data.steps), psi=ones)
    params = base.params.with_constraint(None).with_penalty(PRECHECK_EPS)
    try:
        solve_step(FaceField.zeros(grid), math.inf, step, params, base.cfg)
    except NumericFailure as e:
        return f"penalized problem at Psi = 1 failed: {e}"
    return None


def _entry(trajectory: Trajectory, n: float, q_probes: Sequence[float], volume: float) -> PLimitEntry:
    states = trajectory.states[1:] or trajectory.states
    max_curl = max(float(np.max(magnitude(curl(h)), initial=0.0)) for h in states)
    endpoint = float(np.max(magnitude(curl(trajectory.final)), initial=0.0))
    ln_norm = curl_space_time_norm(trajectory, n)
    lq, trend = {}, {}
    for q in q_probes:
        lq[f"{q:g}"] = curl_space_time_norm(trajectory, q)
        trend[f"{q:g}"] = volume ** (1.0 / q - 1.0 / n) * ln_norm if volume > 0 else 0.0
    return PLimitEntry(
        n=n,
        max_curl=max_curl,
        endpoint_max_curl=endpoint,
        lq_norms=lq,
        holder_trend=trend,
        ln_norm=ln_norm,
        cauchy_distance=None,
    )


def p_sweep(
    base: SweepBase, n_schedule: Sequence[float], q_probes: Sequence[float] = (4.0,)
) -> PLimitReport:
    """Evolve with exponent n for every n of the schedule, concurrently.

    A failing entry ends the report at that position; earlier entries stay.
    """
    ns = _check_n_schedule(n_schedule, base.params.p)
    probes = sorted({float(q) for q in q_probes} | {4.0})
    volume = base.space_time_volume
    report = PLimitReport(
        n_schedule=ns, q_probes=probes, space_time_volume=volume, precheck_ok=True
    )
    reason = _precheck(base)
    if reason is not None:
        logger.error("Large-exponent sweep precheck failed: %s", reason)
        report.precheck_ok = False
        report.failure = f"precheck: {reason}"
        return report

    jobs = [
        (lambda n=n: run(base.data, base.params.with_exponent(n), base.cfg)) for n in ns
    ]
    outcomes = run_ordered(jobs, concurrency=base.concurrency)
    previous: Trajectory | None = None
    for n, outcome in zip(ns, outcomes):
        if isinstance(outcome, BaseException):
            if not isinstance(outcome, PcurlError):
                raise outcome
            if isinstance(outcome, NumericFailure):
                outcome = outcome.at(f"n={n:g}")
            report.failure = str(outcome)
            logger.error("Large-exponent sweep stopped: %s", report.failure)
            break
        entry = _entry(outcome, n, probes, volume)
        if previous is not None:
            entry.cauchy_distance = max_state_distance(previous, outcome)
        report.entries.append(entry)
        report.endpoints[n] = outcome.final
        previous = outcome
        logger.info("n=%g: max|curl h| = %.4g", n, entry.max_curl)

    if report.complete:
        last = report.entries[-1]
        l4 = last.lq_norms["4"]
        report.saturated = (
            last.max_curl <= 1.0 + SATURATION_TOL
            and l4 <= volume**0.25 * (1.0 + SATURATION_TOL)
        )
    return report


# ── penalty sweep ────────────────────────────────────────────────────────────


class PenaltyEntry(BaseModel):
    eps: float
    violation: float
    violation_power: float
    penalty_mass: float
    time_derivative: float
    linf_l2: float
    curl_lp: float
    measure_a: float
    measure_b: float
    measure_c: float
    measure_d: float
    partition_defect: float


class PenaltyReport(BaseModel):
    eps_schedule: list[float]
    space_time_volume: float
    entries: list[PenaltyEntry] = []
    failure: str | None = None
    violation_trend_ok: bool | None = None
    mass_uniform: bool | None = None
    b_measure_trend_ok: bool | None = None

    @property
    def passed(self) -> bool:
        return (
            self.failure is None
            and bool(self.violation_trend_ok)
            and bool(self.mass_uniform)
            and bool(self.b_measure_trend_ok)
        )


def _check_eps_schedule(schedule: Sequence[float]) -> list[float]:
    eps = [float(e) for e in schedule]
    if not eps or any(not 0 < e < 1 for e in eps):
        raise InvalidArgument("eps_schedule must be a non-empty list of values in (0, 1)")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise InvalidArgument("eps_schedule must be strictly decreasing")
    return eps


def _penalty_entry(trajectory: Trajectory, eps: float, volume: float) -> PenaltyEntry:
    data, params = trajectory.data, trajectory.params
    p = params.p
    states, psis, dts = [], [], []
    mass = a = b = c = d = 0.0
    root, cap = math.sqrt(eps), 1.0 / eps
    time_derivative_sq = 0.0
    for k in range(1, len(trajectory)):
        h, dt = trajectory.states[k], data.dt(k)
        psi = node_data(data, params, k).psi
        assert psi is not None
        states.append(h)
        psis.append(psi)
        dts.append(dt)
        cell = dt * h.grid.cell_volume
        s = safe_power(magnitude(curl(h)), p) - safe_power(psi.data, p)
        mass += cell * float(np.sum(penalty_k(s, eps)))
        a += cell * np.count_nonzero(np.abs(s) < root)
        b += cell * np.count_nonzero((s >= root) & (s <= cap))
        c += cell * np.count_nonzero(s > cap)
        d += cell * np.count_nonzero(s <= -root)
        time_derivative_sq += l2_norm(h - trajectory.states[k - 1]) ** 2 / dt
    violation = constraint_violation(states, psis, p, dts)
    curl_lp = sum(dt * lp_norm(curl(h), p) ** p for h, dt in zip(states, dts)) ** (1.0 / p)
    return PenaltyEntry(
        eps=eps,
        violation=violation.linear,
        violation_power=violation.power,
        penalty_mass=mass,
        time_derivative=math.sqrt(time_derivative_sq),
        linf_l2=max(trajectory.l2_norms()),
        curl_lp=curl_lp,
        measure_a=a,
        measure_b=b,
        measure_c=c,
        measure_d=d,
        partition_defect=abs(a + b + c + d - volume) / volume if volume > 0 else 0.0,
    )


def penalty_sweep(base: SweepBase, eps_schedule: Sequence[float]) -> PenaltyReport:
    """Penalized evolutions along a decreasing eps schedule, each warm-started from the last."""
    eps_list = _check_eps_schedule(eps_schedule)
    if base.data.psi is None and base.params.constraint is None:
        raise InvalidArgument("the penalty sweep needs a constraint profile Psi")
    volume = base.space_time_volume
    report = PenaltyReport(eps_schedule=eps_list, space_time_volume=volume)
    previous: Trajectory | None = None
    for index, eps in enumerate(eps_list):
        try:
            trajectory = run(base.data, base.params.with_penalty(eps), base.cfg, warm_start=previous)
        except NumericFailure as e:
            report.failure = str(e.at(f"eps[{index}]={eps:g}"))
            logger.error("Penalty sweep stopped: %s", report.failure)
            break
        entry = _penalty_entry(trajectory, eps, volume)
        report.entries.append(entry)
        previous = trajectory
        logger.info(
            "eps=%g: violation %.4g, penalty mass %.4g", eps, entry.violation, entry.penalty_mass
        )

    if report.entries:
        violations = [e.violation for e in report.entries]
        masses = [e.penalty_mass for e in report.entries]
        report.violation_trend_ok = nonincreasing_with_reversal(violations, 1, 0.1)
        report.mass_uniform = max(masses) <= 2.0 * min(masses)
        report.b_measure_trend_ok = nonincreasing_with_reversal([e.measure_b for e in report.entries])
    return report
