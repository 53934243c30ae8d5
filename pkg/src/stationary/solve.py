"""Stationary states: minimizers of J and the constrained stationary VI."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel

from src.constitutive.laws import penalty_k, safe_power
from src.constitutive.params import ConstitutiveParams
from src.errors import InvalidArgument
from src.evolution.constrained import VIConfig, solve_constrained_step
from src.evolution.data import StepData, TimeSeriesData
from src.evolution.energy import StepProblem, edge_flux
from src.evolution.solver import StepperConfig, solve_step
from src.limits.feasibility import feasible_test_fields
from src.mesh.grid import CellField, FaceField, GridSpec, SurfaceField
from src.mesh.operators import curl, curl_adjoint, inner, magnitude

logger = logging.getLogger(__name__)

STATIONARY = math.inf
PAIRING_TOL = 1e-7


@dataclass(frozen=True, eq=False)
class StationaryProblem:
    f_inf: FaceField
    g_inf: SurfaceField
    params: ConstitutiveParams
    psi_inf: CellField | None = None
    alpha: float | None = None

    def __post_init__(self) -> None:
        if self.g_inf.grid != self.f_inf.grid:
            raise InvalidArgument("f_inf and g_inf live on different grids")
        if self.psi_inf is None:
            return
        if self.psi_inf.grid != self.f_inf.grid:
            raise InvalidArgument("psi_inf lives on a different grid")
        low = float(np.min(self.psi_inf.data))
        alpha = low if self.alpha is None else float(self.alpha)
        if not alpha > 0 or low < alpha * (1.0 - 1e-12):
            raise InvalidArgument(f"need psi_inf >= alpha > 0, got min {low:.6g}, alpha {alpha:.6g}")
        object.__setattr__(self, "alpha", alpha)

    @classmethod
    def from_series(
        cls, data: TimeSeriesData, params: ConstitutiveParams, k: int = -1
    ) -> StationaryProblem:
        """The stationary problem posed by the data of node ``k`` (the last by default)."""
        psi = None if data.psi is None else data.psi[k]
        return cls(data.f[k], data.g[k], params, psi)

    @property
    def grid(self) -> GridSpec:
        return self.f_inf.grid

    @property
    def constrained(self) -> bool:
        return self.psi_inf is not None

    def unconstrained(self) -> StationaryProblem:
        return StationaryProblem(self.f_inf, self.g_inf, self.params.with_penalty(None))

    def step_data(self) -> StepData:
        return StepData(STATIONARY, self.f_inf, self.g_inf, self.psi_inf)

    def functional(self) -> StepProblem:
        """J as a step problem with dt = inf and the unpenalized law."""
        zero = FaceField.zeros(self.grid)
        data = StepData(STATIONARY, self.f_inf, self.g_inf)
        return StepProblem.build(zero, STATIONARY, data, self.params.with_penalty(None))


class StationaryReport(BaseModel):
    p: float
    constrained: bool
    pg_residual: float
    iterations: int
    eps_trace: list[tuple[float, int, float]] = []
    shift_rounds: int = 0
    max_violation: float = 0.0
    feasibility_tol: float = 0.0
    feasible: bool = True
    pairing_min: float | None = None
    pairing_scale: float | None = None
    pairing_allowance: float | None = None
    pairing_ok: bool = True
    multiplier_max: float = 0.0
    active_fraction: float = 0.0


def minimize_J(
    problem: StationaryProblem, cfg: StepperConfig, x0: FaceField | None = None
) -> FaceField:
    """Minimizer of J(h) = int (nu/p)|curl h|^p - int f.h - int_G g.h over admissible fields."""
    return _minimize_J(problem, cfg, x0)[0]


def _minimize_J(problem: StationaryProblem, cfg: StepperConfig, x0: FaceField | None):
    if problem.constrained:
        raise InvalidArgument("minimize_J solves the unconstrained problem; drop psi_inf first")
    zero = FaceField.zeros(problem.grid)
    params = problem.params.with_penalty(None)
    h, diagnostics = solve_step(zero, STATIONARY, problem.step_data(), params, cfg, x0=x0)
    logger.info(
        "Stationary minimizer: %d iterations, residual %.3e",
        diagnostics.iterations, diagnostics.pg_residual,
    )
    return h, diagnostics


def stationary_report(problem: StationaryProblem, cfg: StepperConfig) -> tuple[FaceField, StationaryReport]:
    h, diagnostics = _minimize_J(problem, cfg, None)
    return h, StationaryReport(
        p=problem.params.p,
        constrained=False,
        pg_residual=diagnostics.pg_residual,
        iterations=diagnostics.iterations,
    )


def multiplier_field(
    h: FaceField,
    problem: StationaryProblem,
    level: np.ndarray | None = None,
    eps: float | None = None,
) -> CellField:
    """lambda = nu (k_eps - 1) |curl h|^(p-2) per cell; zero where the penalty is idle.

    ``level`` is the (possibly shifted) Psi^p used by the penalized law.
    """
    if problem.psi_inf is None:
        raise InvalidArgument("multipliers need a constraint profile")
    params = problem.params
    eps = params.penalty_eps if eps is None else eps
    if eps is None:
        raise InvalidArgument("multipliers need a penalty eps")
    if level is None:
        level = safe_power(problem.psi_inf.data, params.p)
    m = magnitude(curl(h))
    k = penalty_k(safe_power(m, params.p) - level, eps)
    nu = params.nu_cells(problem.grid)
    return CellField(problem.grid, nu * (k - 1.0) * safe_power(m, params.p - 2.0))


def vi_pairings(
    h: FaceField, problem: StationaryProblem, tests: list[FaceField]
) -> tuple[np.ndarray, float]:
    """J'(h)[phi - h] for every test field phi, with the scale of its parts."""
    functional = problem.functional()
    w = curl(h)
    flux = curl_adjoint(edge_flux(functional.law, w, magnitude(w)))
    load = functional.f + functional.load
    pairings, scale = [], 0.0
    for phi in tests:
        delta = phi - h
        internal, linear = inner(flux, delta), inner(load, delta)
        pairings.append(internal - linear)
        scale = max(scale, abs(internal) + abs(linear))
    return np.asarray(pairings), scale


def solve_stationary_vi(
    problem: StationaryProblem,
    eps_schedule: tuple[float, ...],
    cfg: StepperConfig,
    vi: VIConfig | None = None,
) -> FaceField:
    """Penalty continuation over ``eps_schedule`` followed by multiplier-shift refinement."""
    return solve_stationary_vi_report(problem, eps_schedule, cfg, vi, test_count=0)[0]


def solve_stationary_vi_report(
    problem: StationaryProblem,
    eps_schedule: tuple[float, ...],
    cfg: StepperConfig,
    vi: VIConfig | None = None,
    *,
    test_count: int = 100,
    seed: int = 0,
) -> tuple[FaceField, StationaryReport]:
    if problem.psi_inf is None:
        raise InvalidArgument("the stationary VI needs psi_inf")
    vi = VIConfig(eps_schedule=tuple(eps_schedule)) if vi is None else vi
    if tuple(vi.eps_schedule) != tuple(float(e) for e in eps_schedule):
        vi = VIConfig(tuple(eps_schedule), vi.feasibility_tol, vi.max_shift_rounds, vi.refine)
    zero = FaceField.zeros(problem.grid)
    base = problem.params.with_penalty(None)
    outcome = solve_constrained_step(zero, STATIONARY, problem.step_data(), base, cfg, vi)
    h = outcome.h

    eps_final = vi.eps_schedule[-1]
    multipliers = multiplier_field(h, problem, outcome.law.level, eps_final).data
    report = StationaryReport(
        p=base.p,
        constrained=True,
        pg_residual=outcome.diagnostics.pg_residual,
        iterations=sum(entry[1] for entry in outcome.eps_trace) + outcome.diagnostics.iterations,
        eps_trace=outcome.eps_trace,
        shift_rounds=outcome.shift_rounds,
        max_violation=outcome.max_violation,
        feasibility_tol=vi.feasibility_tol,
        feasible=outcome.max_violation <= vi.feasibility_tol,
        multiplier_max=float(np.max(multipliers, initial=0.0)),
        active_fraction=float(np.mean(multipliers > 0)),
    )
    if test_count > 0:
        tests = feasible_test_fields(problem.psi_inf, test_count, np.random.default_rng(seed))
        pairings, scale = vi_pairings(h, problem, tests)
        # Exact complementarity makes every pairing >= 0; the allowance is the
        # defect left by |curl h| sitting below Psi on cells that carry a multiplier.
        m = magnitude(curl(h))
        gap = np.maximum(problem.psi_inf.data**2 - m**2, 0.0)
        allowance = 0.5 * problem.grid.cell_volume * float(np.sum(multipliers * gap))
        pairing_min = float(np.min(pairings))
        report.pairing_min = pairing_min
        report.pairing_scale = scale
        report.pairing_allowance = allowance
        report.pairing_ok = pairing_min >= -(PAIRING_TOL * max(scale, 1e-300) + allowance)
    logger.info(
        "Stationary VI: violation %.3e after %d shift rounds, pairing min %s",
        outcome.max_violation, outcome.shift_rounds, report.pairing_min,
    )
    return h, report
