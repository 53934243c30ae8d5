"""A-priori energy bookkeeping for a computed trajectory.

Time integrals use right-endpoint sums, matching backward Euler: the data and
the state of node k are weighted by the length of the step ending at k.
"""

from __future__ import annotations

import logging
import math

import numpy as np
from pydantic import BaseModel

from src.errors import InvalidArgument
from src.evolution.energy import StepProblem
from src.evolution.stepper import Trajectory, node_data
from src.mesh.boundary import boundary_pair
from src.mesh.grid import FaceField
from src.mesh.operators import (
    curl,
    inner,
    l2_norm,
    location_weights,
    lp_norm,
    magnitude,
    weighted_lp,
)
from src.mesh.poincare import conjugate, data_exponents

logger = logging.getLogger(__name__)

CHAIN_TOL = 1e-8
DT_STABILITY_TOL = 0.1


class EnergyReport(BaseModel):
    p: float
    q: float
    r: float
    # max_t |h|^2 + a_* int |curl h|_p^p  <=  C (|f|^{p'}_{q'} + |g|^{p'}_{r'} + |h0|^2)
    lhs: float
    rhs: float
    f_term: float
    g_term: float
    h0_term: float
    constant: float | None
    zero_over_zero: bool
    max_l2_sq: float
    curl_power_integral: float
    # int |dh/dt|^2 + max_t |curl h|_p^p  <=  C2 (data and |curl h0|_p^p)
    time_derivative_sq: float
    curl_sup: float
    lhs_dissipation: float
    rhs_dissipation: float
    constant_dissipation: float | None
    dissipation_defect: float
    gronwall_defect: float
    gronwall_holds: bool
    dissipation_confirmed: bool

    @property
    def holds(self) -> bool:
        return self.zero_over_zero or self.constant is not None


def space_time_norm(fields: list, dts: list[float], q: float) -> float:
    """L^q(0,T; L^q) of co-located magnitudes with right-endpoint time weights."""
    if not fields:
        return 0.0
    values = np.concatenate([magnitude(field) for field in fields])
    weights = np.concatenate([dt * location_weights(field) for field, dt in zip(fields, dts)])
    return weighted_lp(values, weights, q)


def _ratio(lhs: float, rhs: float) -> tuple[float | None, bool]:
    if rhs > 0:
        return lhs / rhs, False
    return None, lhs == 0


def energy_ledger(trajectory: Trajectory, chain_tol: float = CHAIN_TOL) -> EnergyReport:
    """Evaluate both sides of the energy estimates on a trajectory."""
    if len(trajectory) < 2:
        raise InvalidArgument("the energy ledger needs at least one time step")
    data, params = trajectory.data, trajectory.params
    p = params.p
    q, r = data_exponents(p)
    pc = params.p_conjugate
    a_lower = params.nu_min
    states = trajectory.states
    steps = range(1, len(states))
    dts = [data.dt(k) for k in steps]
    h0 = states[0]

    f_norm = space_time_norm([data.f[k] for k in steps], dts, conjugate(q))
    g_norm = space_time_norm([data.g[k] for k in steps], dts, conjugate(r))
    f_term, g_term = f_norm**pc, g_norm**pc
    h0_term = l2_norm(h0) ** 2
    curl_norms = [lp_norm(curl(h), p) for h in states]
    max_l2_sq = max(l2_norm(h) ** 2 for h in states)
    curl_integral = sum(dt * curl_norms[k] ** p for dt, k in zip(dts, steps))
    lhs = max_l2_sq + a_lower * curl_integral
    rhs = f_term + g_term + h0_term
    constant, zero_over_zero = _ratio(lhs, rhs)

    # Tested with h_k: 1/2 |h_K|^2 + a_* sum dt |curl h|_p^p <= 1/2 |h0|^2 + sum dt (f, h) + <g, h>
    dissipated = 0.0
    work = 0.0
    scale = 0.5 * h0_term
    gronwall_defect = 0.0
    for dt, k in zip(dts, steps):
        h = states[k]
        step_work = dt * (inner(data.f[k], h) + boundary_pair(data.g[k], h))
        step_dissipated = dt * a_lower * curl_norms[k] ** p
        dissipated += step_dissipated
        work += step_work
        half_sq = 0.5 * l2_norm(h) ** 2
        scale += abs(step_work) + step_dissipated + half_sq
        gronwall_defect = max(gronwall_defect, half_sq + dissipated - 0.5 * h0_term - work)

    # Tested with the increment: E_k(h_k) <= E_k(h_{k-1}) step by step.
    dissipation_defect = 0.0
    time_derivative_sq = 0.0
    for dt, k in zip(dts, steps):
        increment: FaceField = states[k] - states[k - 1]
        time_derivative_sq += l2_norm(increment) ** 2 / dt
        problem = StepProblem.build(states[k - 1], dt, node_data(data, params, k), params)
        before = problem.energy(states[k - 1])
        after = problem.energy(states[k])
        size = 1.0 + abs(before) + abs(after)
        dissipation_defect = max(dissipation_defect, (after - before) / size)

    g_sup = max((lp_norm(data.g[k], conjugate(r)) for k in steps), default=0.0)
    g_rate = sum(
        dt * (lp_norm(data.g[k] - data.g[k - 1], conjugate(r)) / dt) ** pc
        for dt, k in zip(dts, steps)
    )
    f_l2 = space_time_norm([data.f[k] for k in steps], dts, 2.0)
    curl_sup = max(curl_norms)
    lhs_dissipation = time_derivative_sq + curl_sup**p
    rhs_dissipation = f_l2**2 + g_sup**pc + g_rate + curl_norms[0] ** p
    constant_dissipation, _ = _ratio(lhs_dissipation, rhs_dissipation)

    finite = all(math.isfinite(v) for v in (lhs, rhs, lhs_dissipation, curl_sup))
    gronwall_rel = gronwall_defect / scale if scale > 0 else 0.0
    report = EnergyReport(
        p=p,
        q=q,
        r=r,
        lhs=lhs,
        rhs=rhs,
        f_term=f_term,
        g_term=g_term,
        h0_term=h0_term,
        constant=constant,
        zero_over_zero=zero_over_zero,
        max_l2_sq=max_l2_sq,
        curl_power_integral=curl_integral,
        time_derivative_sq=time_derivative_sq,
        curl_sup=curl_sup,
        lhs_dissipation=lhs_dissipation,
        rhs_dissipation=rhs_dissipation,
        constant_dissipation=constant_dissipation,
        dissipation_defect=dissipation_defect,
        gronwall_defect=gronwall_rel,
        gronwall_holds=finite and gronwall_rel <= chain_tol,
        dissipation_confirmed=finite and dissipation_defect <= chain_tol,
    )
    logger.info(
        "Energy ledger: lhs %.6g rhs %.6g C %s, Gronwall defect %.3e",
        lhs, rhs, "0/0" if zero_over_zero else constant, gronwall_rel,
    )
    return report


class RefinementReport(BaseModel):
    """Energy constants of one run and of its rerun with the step halved."""

    steps: int
    refined_steps: int
    constant: float | None
    refined_constant: float | None
    ratio: float | None
    tolerance: float
    stable: bool


def compare_refinement(
    coarse: EnergyReport,
    fine: EnergyReport,
    steps: int,
    tolerance: float = DT_STABILITY_TOL,
) -> RefinementReport:
    """C must move by at most ``tolerance`` (relative) when dt is halved; 0/0 on both is stable."""
    ratio: float | None = None
    if coarse.constant is not None and fine.constant is not None and coarse.constant > 0:
        ratio = fine.constant / coarse.constant
        stable = abs(ratio - 1.0) <= tolerance
    else:
        stable = coarse.zero_over_zero and fine.zero_over_zero
    logger.info("Step refinement %d -> %d: C ratio %s", steps, 2 * steps, ratio)
    return RefinementReport(
        steps=steps,
        refined_steps=2 * steps,
        constant=coarse.constant,
        refined_constant=fine.constant,
        ratio=ratio,
        tolerance=tolerance,
        stable=stable,
    )
