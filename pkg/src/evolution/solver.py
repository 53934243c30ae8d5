"""Projected Barzilai-Borwein descent with Armijo backtracking for one convex step."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from src.config import AppConfig
from src.constitutive.params import ConstitutiveParams
from src.errors import InvalidArgument, NumericFailure
from src.evolution.data import StepData
from src.evolution.energy import StepProblem
from src.mesh.grid import FaceField
from src.mesh.operators import inner, l2_norm, leray_project

logger = logging.getLogger(__name__)

REPROJECT_EVERY = 50


@dataclass(frozen=True)
class StepperConfig:
    max_iterations: int = 5000
    tolerance: float = 1e-9
    armijo: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 60
    step_min: float = 1e-12
    step_max: float = 1e12

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise InvalidArgument("max_iterations must be at least 1")
        if not self.tolerance > 0:
            raise InvalidArgument(f"tolerance must be positive, got {self.tolerance}")
        if not 0 < self.armijo <= 0.5:
            raise InvalidArgument(f"Armijo constant must lie in (0, 0.5], got {self.armijo}")
        if not 0 < self.backtrack < 1:
            raise InvalidArgument(f"backtrack factor must lie in (0, 1), got {self.backtrack}")
        if not 0 < self.step_min <= self.step_max:
            raise InvalidArgument("need 0 < step_min <= step_max")

    @classmethod
    def from_app_config(cls, config: AppConfig, sweep: bool = False) -> StepperConfig:
        s = config.solver
        return cls(
            max_iterations=s.max_iterations,
            tolerance=s.sweep_tolerance if sweep else s.tolerance,
            armijo=s.armijo,
            backtrack=s.backtrack,
            max_backtracks=s.max_backtracks,
            step_min=s.step_min,
            step_max=s.step_max,
        )

    def with_tolerance(self, tolerance: float) -> StepperConfig:
        return replace(self, tolerance=tolerance)


@dataclass
class SolveDiagnostics:
    iterations: int
    pg_residual: float
    target: float
    energy_initial: float
    energy_final: float
    backtracks: int = 0
    energy_trace: list[float] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.pg_residual <= self.target


def minimize_projected(
    problem: StepProblem, cfg: StepperConfig, x0: FaceField | None = None
) -> tuple[FaceField, SolveDiagnostics]:
    """Minimize the step energy over divergence-free fields with zero normal trace.

    Stops when |P grad E|_W <= tol * (1 + |P source|_W). Energies never
    increase beyond a roundoff allowance; non-finite trial points are
    treated as failed line-search steps.
    """
    x = leray_project(problem.h_prev if x0 is None else x0)
    energy, gradient, slack = problem.evaluate(x)
    if not (math.isfinite(energy) and x.is_finite()):
        raise NumericFailure("initial iterate has a non-finite energy", iterations=0)

    target = cfg.tolerance * (1.0 + l2_norm(leray_project(problem.source)))
    d = leray_project(gradient)
    residual = l2_norm(d)
    diagnostics = SolveDiagnostics(0, residual, target, energy, energy, energy_trace=[energy])
    if residual <= target:
        return x, diagnostics

    tau = 1.0 if problem.stationary else problem.dt
    for iteration in range(1, cfg.max_iterations + 1):
        step = min(max(tau, cfg.step_min), cfg.step_max)
        accepted = None
        for _ in range(cfg.max_backtracks):
            trial = x - step * d
            if iteration % REPROJECT_EVERY == 0:
                trial = leray_project(trial)
            trial_energy, trial_gradient, trial_slack = problem.evaluate(trial)
            drop = cfg.armijo * step * residual**2
            if math.isfinite(trial_energy) and trial_energy <= energy - drop + max(slack, trial_slack):
                accepted = (trial, trial_energy, trial_gradient, trial_slack)
                break
            diagnostics.backtracks += 1
            step *= cfg.backtrack
        if accepted is None:
            raise NumericFailure(
                "line search failed to decrease the energy",
                residual=residual,
                iterations=iteration,
                trace=diagnostics.energy_trace,
            )

        trial, trial_energy, trial_gradient, trial_slack = accepted
        d_new = leray_project(trial_gradient)
        s = trial - x
        y = d_new - d
        sy = inner(s, y)
        tau = inner(s, s) / sy if sy > 0 else min(2.0 * step, cfg.step_max)

        x, energy, slack, d = trial, trial_energy, trial_slack, d_new
        residual = l2_norm(d)
        diagnostics.iterations = iteration
        diagnostics.pg_residual = residual
        diagnostics.energy_final = energy
        diagnostics.energy_trace.append(energy)
        if not x.is_finite():
            raise NumericFailure("iterate became non-finite", residual=residual, iterations=iteration)
        if residual <= target:
            logger.debug(
                "Converged in %d iterations (residual %.3e, target %.3e)",
                iteration, residual, target,
            )
            return leray_project(x), diagnostics

    raise NumericFailure(
        "projected descent hit the iteration cap",
        residual=residual,
        iterations=cfg.max_iterations,
        trace=diagnostics.energy_trace,
    )


def solve_step(
    h_prev: FaceField,
    dt: float,
    data: StepData,
    params: ConstitutiveParams,
    cfg: StepperConfig,
    *,
    x0: FaceField | None = None,
    shift: np.ndarray | None = None,
) -> tuple[FaceField, SolveDiagnostics]:
    """One backward-Euler step (dt = inf solves the stationary problem)."""
    problem = StepProblem.build(h_prev, dt, data, params, shift)
    return minimize_projected(problem, cfg, x0)
