"""Constrained steps |curl h| <= Psi via penalty continuation and multiplier shifts.

The exponential penalty is solved along a decreasing schedule of eps with warm
starts. At the last eps the penalty level Psi^p is lowered per cell by a shift
theta, updated as theta <- max(0, theta + |curl h|^p - Psi^p), until the
constraint holds to ``feasibility_tol`` and the shift sits only on active cells.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from src.constitutive.params import ConstitutiveParams
from src.constitutive.radial import RadialLaw
from src.errors import InvalidArgument, NumericFailure
from src.evolution.data import StepData
from src.evolution.solver import SolveDiagnostics, StepperConfig, solve_step
from src.mesh.grid import FaceField
from src.mesh.operators import curl, magnitude

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class VIConfig:
    eps_schedule: tuple[float, ...] = (0.5, 0.2, 0.1, 0.05)
    feasibility_tol: float = 1e-3
    max_shift_rounds: int = 100
    refine: bool = True

    def __post_init__(self) -> None:
        schedule = tuple(float(e) for e in self.eps_schedule)
        object.__setattr__(self, "eps_schedule", schedule)
        if not schedule or any(not 0 < e < 1 for e in schedule):
            raise InvalidArgument("eps_schedule must be a non-empty list of values in (0, 1)")
        if any(b >= a for a, b in zip(schedule, schedule[1:])):
            raise InvalidArgument("eps_schedule must be strictly decreasing")
        if not self.feasibility_tol > 0:
            raise InvalidArgument("feasibility_tol must be positive")
        if self.max_shift_rounds < 0:
            raise InvalidArgument("max_shift_rounds must be >= 0")


@dataclass
class ConstrainedOutcome:
    h: FaceField
    shift: np.ndarray
    diagnostics: SolveDiagnostics
    law: RadialLaw
    max_violation: float
    complementarity_gap: float
    shift_rounds: int = 0
    eps_trace: list[tuple[float, int, float]] = field(default_factory=list)


def _gaps(h: FaceField, psi: np.ndarray, shift: np.ndarray) -> tuple[float, float]:
    """Relative violation max (m - Psi)/Psi and slack max (Psi - m)/Psi over shifted cells."""
    ratio = magnitude(curl(h)) / psi
    violation = max(0.0, float(np.max(ratio - 1.0, initial=0.0)))
    active = shift > 0
    slack = max(0.0, float(np.max(1.0 - ratio[active], initial=0.0)))
    return violation, slack


def solve_constrained_step(
    h_prev: FaceField,
    dt: float,
    data: StepData,
    params: ConstitutiveParams,
    cfg: StepperConfig,
    vi: VIConfig,
    *,
    x0: FaceField | None = None,
    shift0: np.ndarray | None = None,
) -> ConstrainedOutcome:
    """Approximate the step minimizer over {|curl h| <= Psi}.

    With ``shift0`` (the previous step's shifts) the continuation is skipped
    and only the last eps of the schedule is solved.
    """
    if data.psi is None:
        raise InvalidArgument("a constrained step needs the constraint profile Psi")
    psi = data.psi.data
    eps_final = vi.eps_schedule[-1]
    schedule = vi.eps_schedule if shift0 is None else (eps_final,)
    shift = np.zeros(data.grid.n_cells) if shift0 is None else np.array(shift0, dtype=float)
    warm_shift = shift if shift0 is not None else None

    h = x0
    diagnostics: SolveDiagnostics | None = None
    eps_trace: list[tuple[float, int, float]] = []
    for index, eps in enumerate(schedule):
        penalized = params.with_penalty(eps)
        try:
            h, diagnostics = solve_step(h_prev, dt, data, penalized, cfg, x0=h, shift=warm_shift)
        except NumericFailure as e:
            raise e.at(f"eps[{index}]={eps:g}") from e
        eps_trace.append((eps, diagnostics.iterations, diagnostics.pg_residual))
        logger.debug("eps=%g solved in %d iterations", eps, diagnostics.iterations)
    assert h is not None and diagnostics is not None

    penalized = params.with_penalty(eps_final)
    level = np.power(psi, params.p)
    violation, slack = _gaps(h, psi, shift)
    rounds = 0
    while vi.refine and (violation > vi.feasibility_tol or slack > vi.feasibility_tol):
        if rounds >= vi.max_shift_rounds:
            raise NumericFailure(
                "multiplier shifts did not reach feasibility",
                residual=violation,
                iterations=rounds,
                position=f"shift round {rounds}",
            )
        rounds += 1
        m = magnitude(curl(h))
        shift = np.maximum(0.0, shift + np.power(m, params.p) - level)
        try:
            h, diagnostics = solve_step(h_prev, dt, data, penalized, cfg, x0=h, shift=shift)
        except NumericFailure as e:
            raise e.at(f"shift round {rounds}") from e
        violation, slack = _gaps(h, psi, shift)
        logger.debug("Shift round %d: violation %.3e, slack %.3e", rounds, violation, slack)

    law = RadialLaw.from_params(penalized, data.grid, data.psi, shift)
    return ConstrainedOutcome(
        h=h,
        shift=shift,
        diagnostics=diagnostics,
        law=law,
        max_violation=violation,
        complementarity_gap=slack,
        shift_rounds=rounds,
        eps_trace=eps_trace,
    )
