"""Time stepping: unconstrained backward Euler and the evolution VI."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from src.constitutive.params import ConstitutiveParams
from src.errors import InvalidArgument, NumericFailure
from src.evolution.constrained import VIConfig, solve_constrained_step
from src.evolution.data import DIVERGENCE_TOL, StepData, TimeSeriesData, divergence_defect
from src.evolution.energy import StepProblem
from src.evolution.solver import SolveDiagnostics, StepperConfig, solve_step
from src.mesh.grid import FaceField, GridSpec
from src.mesh.operators import curl, l2_norm, leray_project, lp_norm

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class Trajectory:
    """States h_k on the nodes of the data's time grid, plus per-step solver records."""

    data: TimeSeriesData
    params: ConstitutiveParams
    states: list[FaceField]
    diagnostics: list[SolveDiagnostics | None]
    energies: list[float]
    shifts: list[np.ndarray] | None = None
    violations: list[float] = field(default_factory=list)

    @property
    def grid(self) -> GridSpec:
        return self.data.grid

    @property
    def times(self) -> tuple[float, ...]:
        return self.data.t_grid

    @property
    def final(self) -> FaceField:
        return self.states[-1]

    def __len__(self) -> int:
        return len(self.states)

    def l2_norms(self) -> list[float]:
        return [l2_norm(h) for h in self.states]

    def curl_norms(self, p: float | None = None) -> list[float]:
        exponent = self.params.p if p is None else p
        return [lp_norm(curl(h), exponent) for h in self.states]


def node_data(data: TimeSeriesData, params: ConstitutiveParams, k: int) -> StepData:
    step = data.at(k)
    if step.psi is None and params.constraint is not None:
        step = replace(step, psi=params.constraint.at(k))
    return step


def _check_state(h: FaceField, k: int) -> None:
    defect = divergence_defect(h)
    if defect > DIVERGENCE_TOL:
        raise NumericFailure("state lost divergence-freeness", residual=defect, position=f"step {k}")


def _initial_energy(data: TimeSeriesData, params: ConstitutiveParams, h0: FaceField) -> float:
    problem = StepProblem.build(h0, float("inf"), node_data(data, params, 0), params)
    return problem.energy(h0)


def run(
    data: TimeSeriesData,
    params: ConstitutiveParams,
    cfg: StepperConfig,
    *,
    warm_start: Trajectory | None = None,
) -> Trajectory:
    """Backward-Euler trajectory; each step minimizes its convex step energy.

    A penalized law takes Psi from the data, or from params.constraint when
    the data carries none.
    """
    if warm_start is not None and len(warm_start) != len(data.t_grid):
        raise InvalidArgument("warm start trajectory has a different number of nodes")
    h = leray_project(data.h0)
    states, diagnostics = [h], [None]
    energies = [_initial_energy(data, params, h)]
    for k in range(1, len(data.t_grid)):
        step = node_data(data, params, k)
        dt = data.dt(k)
        x0 = None if warm_start is None else warm_start.states[k]
        problem = StepProblem.build(h, dt, step, params)
        start = problem.energy(h)
        try:
            h_new, diag = solve_step(h, dt, step, params, cfg, x0=x0)
        except NumericFailure as e:
            raise e.at(f"step {k}") from e
        if diag.energy_final > start + 1e-12 * (1.0 + abs(start)):
            if x0 is None:
                raise NumericFailure(
                    "step energy increased", residual=diag.energy_final - start, position=f"step {k}"
                )
            logger.warning("Step %d: warm start ended above E(h_prev); restarting from h_prev", k)
            h_new, diag = solve_step(h, dt, step, params, cfg)
        _check_state(h_new, k)
        h = h_new
        states.append(h)
        diagnostics.append(diag)
        energies.append(diag.energy_final)
        logger.debug("Step %d (t=%.6g): %d iterations", k, step.t, diag.iterations)
    logger.info(
        "Trajectory of %d steps done, %d inner iterations",
        data.steps, sum(d.iterations for d in diagnostics if d is not None),
    )
    return Trajectory(data, params, states, diagnostics, energies)


def run_vi(
    data: TimeSeriesData,
    params: ConstitutiveParams,
    cfg: StepperConfig,
    vi: VIConfig,
) -> Trajectory:
    """Trajectory of the evolution VI over K = {|curl h| <= Psi(t)}."""
    if data.psi is None and params.constraint is None:
        raise InvalidArgument("the evolution VI needs a constraint profile Psi")
    base = params.with_penalty(None)
    h = leray_project(data.h0)
    states, diagnostics, shifts = [h], [None], [np.zeros(data.grid.n_cells)]
    energies = [_initial_energy(data, base, h)]
    violations = [0.0]
    shift: np.ndarray | None = None
    for k in range(1, len(data.t_grid)):
        step = node_data(data, params, k)
        try:
            outcome = solve_constrained_step(
                h, data.dt(k), step, base, cfg, vi, x0=h, shift0=shift
            )
        except NumericFailure as e:
            raise e.at(f"step {k}") from e
        _check_state(outcome.h, k)
        h, shift = outcome.h, outcome.shift
        states.append(h)
        diagnostics.append(outcome.diagnostics)
        shifts.append(shift)
        violations.append(outcome.max_violation)
        energies.append(outcome.diagnostics.energy_final)
        logger.debug(
            "VI step %d: violation %.3e after %d shift rounds",
            k, outcome.max_violation, outcome.shift_rounds,
        )
    return Trajectory(data, params, states, diagnostics, energies, shifts, violations)
