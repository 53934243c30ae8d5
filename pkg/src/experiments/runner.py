"""Run one experiment from a parsed config and write its artifacts.

Exit codes: 0 every verdict passed, 1 a verdict failed, 2 invalid config or
data, 3 a solver failure (the failing stage is named in the summary).
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable

import numpy as np

from src.asymptotics.decay import RegimeConfig, check_constrained_decay, check_decay
from src.asymptotics.series import track_decay
from src.config import AppConfig
from src.constitutive.laws import penalized_apply, power_law_apply
from src.constitutive.params import ConstitutiveParams, PerturbationSpec
from src.constitutive.structure import verify_structure
from src.errors import InvalidArgument, NumericFailure, PcurlError
from src.evolution.constrained import VIConfig
from src.evolution.data import StepData, TimeSeriesData
from src.evolution.export import export_trajectory
from src.evolution.ledger import EnergyReport, compare_refinement, energy_ledger
from src.evolution.solver import StepperConfig, solve_step
from src.evolution.stepper import Trajectory, run, run_vi
from src.experiments.config import ExperimentConfig, Kind
from src.experiments.plots import plot_curves
from src.experiments.presets import build_data
from src.experiments.reports import CSV_SCHEMAS, provenance, write_csv, write_json
from src.limits.dependence import continuous_dependence_experiment
from src.limits.sweeps import SweepBase, p_sweep, penalty_sweep
from src.mesh.grid import FaceField, build_grid
from src.mesh.operators import l2_norm, leray_project
from src.mesh.snapshot import write_field
from src.oracle.basis import divfree_basis
from src.oracle.constrained import constrained_reference
from src.oracle.dense import ReferenceProblem, dense_linear_solve, dense_minimize
from src.stationary.solve import (
    STATIONARY,
    StationaryProblem,
    solve_stationary_vi,
    solve_stationary_vi_report,
    stationary_report,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VERDICT = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

ORACLE_TOL = 1e-6
CONSTRAINED_ORACLE_TOL = 1e-5
PENALIZED_VERIFY_EPS = 0.1
SWEEP_KINDS = (Kind.PLIMIT, Kind.PENALTY_SWEEP, Kind.CDEP)


@dataclass
class RunOutcome:
    exit_code: int
    out_dir: Path
    verdicts: dict[str, bool] = field(default_factory=dict)
    summary: list[str] = field(default_factory=list)


@dataclass
class _Context:
    config: ExperimentConfig
    app: AppConfig
    out: Path
    seed: int
    base: Path | None
    cfg: StepperConfig
    vi: VIConfig
    params: ConstitutiveParams
    data: TimeSeriesData
    limits: dict[str, Any]
    concurrency: int
    summary: list[str] = field(default_factory=list)
    reports: dict[str, Any] = field(default_factory=dict)
    verdicts: dict[str, bool] = field(default_factory=dict)

    @property
    def constrained(self) -> bool:
        return self.data.psi is not None

    @property
    def plots(self) -> bool:
        return self.app.output.plots

    def sweep_base(self) -> SweepBase:
        return SweepBase(self.data, self.params, self.cfg, self.concurrency)

    def stationary_problem(self) -> StationaryProblem:
        return StationaryProblem(
            self.limits["f_inf"], self.limits["g_inf"], self.params, self.limits["psi_inf"]
        )

    def note(self, line: str) -> None:
        logger.info(line)
        self.summary.append(line)


def _stepper_config(config: ExperimentConfig, app: AppConfig) -> StepperConfig:
    cfg = StepperConfig.from_app_config(app, sweep=config.kind in SWEEP_KINDS)
    return replace(cfg, **config.solver.overrides())


def _vi_config(config: ExperimentConfig) -> VIConfig:
    vi = VIConfig()
    if config.schedules.eps_schedule is not None and config.kind is not Kind.PENALTY_SWEEP:
        vi = replace(vi, eps_schedule=tuple(config.schedules.eps_schedule))
    if config.solver.feasibility_tol is not None:
        vi = replace(vi, feasibility_tol=config.solver.feasibility_tol)
    if config.solver.max_shift_rounds is not None:
        vi = replace(vi, max_shift_rounds=config.solver.max_shift_rounds)
    return vi


def _params(config: ExperimentConfig) -> ConstitutiveParams:
    section = config.params
    return ConstitutiveParams(
        p=section.p,
        nu=section.nu,
        penalty_eps=section.penalty_eps,
        perturbation=PerturbationSpec(section.perturbation, section.perturbation_scale),
    )


def _context(
    config: ExperimentConfig, app: AppConfig, out: Path, seed: int, base: Path | None
) -> _Context:
    grid = build_grid(config.grid.extents, config.grid.cells)
    t_final = config.data.t_final
    if config.kind is Kind.DECAY:
        t_final *= config.decay.horizon_factor
    data, limits = build_data(grid, config.data, seed, t_final=t_final, base=base)
    return _Context(
        config=config,
        app=app,
        out=out,
        seed=seed,
        base=base,
        cfg=_stepper_config(config, app),
        vi=_vi_config(config),
        params=_params(config),
        data=data,
        limits=limits,
        concurrency=config.experiment.concurrency or app.runtime.sweep_concurrency,
    )


def _evolve(ctx: _Context, data: TimeSeriesData | None = None) -> Trajectory:
    """Evolution VI under a hard constraint, otherwise the (possibly penalized) equation."""
    data = ctx.data if data is None else data
    if ctx.constrained and ctx.params.penalty_eps is None:
        return run_vi(data, ctx.params, ctx.cfg, ctx.vi)
    return run(data, ctx.params, ctx.cfg)


def _refine_dt(ctx: _Context, ledger: EnergyReport) -> None:
    """Rerun the trajectory with twice the steps and compare the energy constants."""
    section = ctx.config.data
    refined, _ = build_data(
        ctx.data.h0.grid,
        section.model_copy(update={"steps": 2 * section.steps}),
        ctx.seed,
        t_final=ctx.data.t_grid[-1],
        base=ctx.base,
    )
    report = compare_refinement(ledger, energy_ledger(_evolve(ctx, refined)), section.steps)
    ctx.reports["dt_refinement"] = report
    ctx.verdicts["dt_stability"] = report.stable
    ctx.note(f"energy constant at {report.refined_steps} steps: {report.refined_constant}")


# ── kinds ────────────────────────────────────────────────────────────────────


def _run_evolve(ctx: _Context) -> None:
    trajectory = _evolve(ctx)
    export_trajectory(trajectory, ctx.out, snapshots=ctx.app.output.snapshots)
    ledger = energy_ledger(trajectory)
    ctx.reports["ledger"] = ledger
    ctx.verdicts["energy_estimate"] = ledger.holds
    ctx.verdicts["gronwall_chain"] = ledger.gronwall_holds
    if trajectory.violations:
        ctx.reports["max_violation"] = max(trajectory.violations)
    ctx.note(f"energy constant: {ledger.constant}, final energy {trajectory.energies[-1]:.6g}")
    if ctx.config.data.dt_refine:
        _refine_dt(ctx, ledger)
    if ctx.plots:
        plot_curves(
            ctx.out / "energy.svg",
            trajectory.times,
            {"step energy": trajectory.energies},
            title="Step energy",
            xlabel="t",
            ylabel="E",
        )
        plot_curves(
            ctx.out / "norms.svg",
            trajectory.times,
            {"|h|_2": trajectory.l2_norms(), "|curl h|_p": trajectory.curl_norms()},
            title="Norms along the trajectory",
            xlabel="t",
            ylabel="norm",
        )


def _run_stationary(ctx: _Context) -> None:
    problem = ctx.stationary_problem()
    if problem.constrained:
        eps = ctx.vi.eps_schedule
        h, report = solve_stationary_vi_report(problem, eps, ctx.cfg, ctx.vi, seed=ctx.seed)
        ctx.verdicts["feasible"] = report.feasible
        ctx.verdicts["vi_pairing"] = report.pairing_ok
    else:
        h, report = stationary_report(problem, ctx.cfg)
    ctx.reports["stationary"] = report
    write_field(ctx.out / "h_inf.field", h)
    rows = [(key, value) for key, value in report.model_dump().items() if not isinstance(value, list)]
    write_csv(ctx.out / "stationary.csv", CSV_SCHEMAS["stationary"]["stationary.csv"], rows)
    ctx.note(f"stationary solution: |h_inf|_2 = {l2_norm(h):.6g}")


def _stationary_state(ctx: _Context) -> FaceField:
    """h_inf of the limit data under the same law as the trajectory."""
    problem = ctx.stationary_problem()
    if problem.constrained and ctx.params.penalty_eps is None:
        return solve_stationary_vi(problem, ctx.vi.eps_schedule, ctx.cfg, ctx.vi)
    data = StepData(STATIONARY, problem.f_inf, problem.g_inf, problem.psi_inf)
    zero = FaceField.zeros(problem.grid)
    h, _ = solve_step(zero, STATIONARY, data, ctx.params, ctx.cfg)
    return h


def _run_decay(ctx: _Context) -> None:
    h_inf = _stationary_state(ctx)
    trajectory = _evolve(ctx)
    limits = ctx.limits
    series = track_decay(trajectory, h_inf, limits["f_inf"], limits["g_inf"], limits["psi_inf"])
    if ctx.constrained and ctx.params.penalty_eps is None:
        psi_inf = limits["psi_inf"]
        gaps = [float(np.max(np.abs(psi.data - psi_inf.data))) for psi in ctx.data.psi]
        verdict = check_constrained_decay(series, gaps, ctx.params.p, ctx.config.decay.final_tol)
        ctx.reports["constrained_decay"] = verdict
        ctx.verdicts["constrained_decay"] = verdict.passed
        bound: list[float | None] = [None] * len(series.times)
        ctx.note(f"constrained decay: gamma {verdict.gamma:.4g}, final ratio {verdict.final_ratio}")
    else:
        ledger = energy_ledger(trajectory)
        regime = RegimeConfig(
            floor_rel=ctx.config.decay.floor,
            final_tol=ctx.config.decay.final_tol,
            poincare=ctx.config.decay.poincare,
        )
        verdict = check_decay(series, ctx.params, regime, ledger)
        ctx.reports["ledger"] = ledger
        ctx.reports["decay"] = verdict
        ctx.verdicts["decay_bound"] = verdict.passed
        bound = verdict.bound
        ctx.note(
            f"decay regime {verdict.regime.value}: {verdict.violation_count} violations, "
            f"first checked node {verdict.first_checked_index}"
        )
    rows = [
        (k, float(t), float(series.phi[k]), bound[k], float(series.xi[k]), float(series.zeta[k]))
        for k, t in enumerate(series.times)
    ]
    write_csv(ctx.out / "decay.csv", CSV_SCHEMAS["decay"]["decay.csv"], rows)
    if ctx.plots:
        curves: dict[str, list[float | None]] = {"phi": list(series.phi)}
        if any(b is not None for b in bound):
            curves["bound"] = bound
        plot_curves(
            ctx.out / "decay.svg",
            series.times,
            curves,
            title="Distance to the stationary state",
            xlabel="t",
            ylabel="|h - h_inf|^2",
            logy=True,
        )


def _run_plimit(ctx: _Context) -> None:
    schedule = ctx.config.schedules.n_schedule or []
    report = p_sweep(ctx.sweep_base(), schedule, ctx.config.schedules.q_probes)
    ctx.reports["plimit"] = report
    ctx.verdicts["complete"] = report.complete
    ctx.verdicts["saturated"] = bool(report.saturated)
    rows = [
        (
            e.n,
            e.max_curl,
            e.endpoint_max_curl,
            e.ln_norm,
            e.lq_norms.get("4"),
            e.holder_trend.get("4"),
            e.cauchy_distance,
        )
        for e in report.entries
    ]
    write_csv(ctx.out / "plimit.csv", CSV_SCHEMAS["plimit"]["plimit.csv"], rows)
    for n, h in report.endpoints.items():
        write_field(ctx.out / f"endpoint_n{n:g}.field", h)
    if report.failure:
        ctx.note(f"large-exponent sweep stopped: {report.failure}")
    if report.entries:
        ctx.note(f"max |curl h| at n = {report.entries[-1].n:g}: {report.entries[-1].max_curl:.6g}")
    if ctx.plots and report.entries:
        plot_curves(
            ctx.out / "plimit.svg",
            [e.n for e in report.entries],
            {"max |curl h|": [e.max_curl for e in report.entries]},
            title="Saturation toward |curl h| <= 1",
            xlabel="n",
            ylabel="max |curl h|",
            logx=True,
        )


def _run_penalty(ctx: _Context) -> None:
    schedule = ctx.config.schedules.eps_schedule or []
    report = penalty_sweep(ctx.sweep_base(), schedule)
    ctx.reports["penalty"] = report
    ctx.verdicts["penalty_recovery"] = report.passed
    columns = CSV_SCHEMAS["penalty-sweep"]["penalty.csv"]
    rows = [tuple(getattr(e, c) for c in columns) for e in report.entries]
    write_csv(ctx.out / "penalty.csv", columns, rows)
    if report.failure:
        ctx.note(f"penalty sweep stopped: {report.failure}")
    ctx.note(
        f"violation trend ok: {report.violation_trend_ok}, mass uniform: {report.mass_uniform}"
    )
    if ctx.plots and report.entries:
        plot_curves(
            ctx.out / "penalty.svg",
            [e.eps for e in report.entries],
            {
                "violation": [e.violation for e in report.entries],
                "penalty mass": [e.penalty_mass for e in report.entries],
            },
            title="Penalty recovery",
            xlabel="eps",
            ylabel="value",
            logx=True,
            logy=True,
        )


def _run_cdep(ctx: _Context) -> None:
    deltas = ctx.config.schedules.delta_schedule or []
    report = continuous_dependence_experiment(
        ctx.sweep_base(), ctx.config.cdep.channel, deltas, vi=ctx.vi
    )
    ctx.reports["cdep"] = report
    ctx.verdicts["continuous_dependence"] = report.passed
    columns = CSV_SCHEMAS["cdep"]["cdep.csv"]
    rows = [tuple(getattr(e, c) for c in columns) for e in report.entries]
    write_csv(ctx.out / "cdep.csv", columns, rows)
    if report.failure:
        ctx.note(f"continuous dependence stopped: {report.failure}")
    ctx.note(f"channel {report.channel.value}: fitted constant {report.fitted_constant}")
    if ctx.plots and report.entries:
        plot_curves(
            ctx.out / "cdep.svg",
            [e.delta for e in report.entries],
            {"lhs": [e.lhs for e in report.entries], "rhs": [e.rhs for e in report.entries]},
            title=f"Continuous dependence on {report.channel.value}",
            xlabel="delta",
            ylabel="size",
            logx=True,
            logy=True,
        )


def _run_verify(ctx: _Context) -> None:
    p_values = ctx.config.schedules.p_values or [ctx.params.p]
    samples = ctx.config.experiment.samples
    reports = []
    for p in p_values:
        params = ctx.params.with_exponent(p)
        laws: list[tuple[str, Callable[[np.ndarray], np.ndarray]]] = [
            ("power", lambda u, params=params: power_law_apply(u, params))
        ]
        if ctx.constrained:
            eps = ctx.params.penalty_eps or PENALIZED_VERIFY_EPS
            penalized = params.with_penalty(eps)
            level = ctx.config.data.psi_level
            laws.append(("penalized", lambda u, q=penalized: penalized_apply(u, level, q)))
        for name, apply in laws:
            report = verify_structure(
                apply, p, samples, ctx.seed, law=name, concurrency=ctx.concurrency
            )
            reports.append(report)
            ctx.verdicts[f"{name}_p{p:g}"] = report.passed
    ctx.reports["structure"] = reports
    rows = [
        (r.law, r.p, r.sample_count, r.coercivity_min, r.growth_max, r.monotonicity_min, r.passed)
        for r in reports
    ]
    write_csv(ctx.out / "structure.csv", CSV_SCHEMAS["verify"]["structure.csv"], rows)
    ctx.note(f"structure checks: {sum(r.passed for r in reports)}/{len(reports)} passed")


def _relative(a: FaceField, b: FaceField) -> float:
    return l2_norm(a - b) / max(l2_norm(b), 1e-300)


def _reference_problem(ctx: _Context, k: int, h_prev: FaceField | None, dt: float) -> ReferenceProblem:
    nu = ctx.params.nu_cells(ctx.data.grid)
    if k < 0:
        return ReferenceProblem(ctx.params.p, nu, ctx.limits["f_inf"], ctx.limits["g_inf"])
    return ReferenceProblem(ctx.params.p, nu, ctx.data.f[k], ctx.data.g[k], h_prev, dt)


def _run_oracle(ctx: _Context) -> None:
    if ctx.params.perturbation.active or ctx.params.penalty_eps is not None:
        raise InvalidArgument("oracle-compare supports the pure power law only")
    grid = ctx.data.grid
    basis = divfree_basis(grid)
    rows = []
    if ctx.constrained:
        problem = ctx.stationary_problem()
        h = solve_stationary_vi(problem, ctx.vi.eps_schedule, ctx.cfg, ctx.vi)
        reference = constrained_reference(
            _reference_problem(ctx, -1, None, math.inf),
            problem.psi_inf,
            ctx.config.solver.oracle_tol,
        )
        worst = _relative(h, reference.h)
        tolerance = CONSTRAINED_ORACLE_TOL
        rows.append((0, math.inf, l2_norm(h), l2_norm(reference.h), worst))
    else:
        trajectory = run(ctx.data, ctx.params, ctx.cfg)
        h_ref = leray_project(ctx.data.h0)
        worst = 0.0
        for k in range(1, len(ctx.data.t_grid)):
            problem = _reference_problem(ctx, k, h_ref, ctx.data.dt(k))
            if math.isclose(ctx.params.p, 2.0):
                h_ref = dense_linear_solve(problem, basis)
            else:
                h_ref = dense_minimize(problem.energy, basis, x0=h_ref)
            diff = _relative(trajectory.states[k], h_ref)
            worst = max(worst, diff)
            rows.append((k, ctx.data.t_grid[k], l2_norm(trajectory.states[k]), l2_norm(h_ref), diff))
        tolerance = ORACLE_TOL
    write_csv(ctx.out / "oracle.csv", CSV_SCHEMAS["oracle-compare"]["oracle.csv"], rows)
    ctx.reports["oracle"] = {"max_relative_diff": worst, "tolerance": tolerance}
    ctx.verdicts["oracle_match"] = worst <= tolerance
    ctx.note(f"max relative diff: {worst:.3e} (tolerance {tolerance:g})")


_KINDS: dict[Kind, Callable[[_Context], None]] = {
    Kind.EVOLVE: _run_evolve,
    Kind.STATIONARY: _run_stationary,
    Kind.DECAY: _run_decay,
    Kind.PLIMIT: _run_plimit,
    Kind.PENALTY_SWEEP: _run_penalty,
    Kind.CDEP: _run_cdep,
    Kind.VERIFY: _run_verify,
    Kind.ORACLE_COMPARE: _run_oracle,
}


def output_dir(config: ExperimentConfig, app: AppConfig, out: Path | None) -> Path:
    if out is not None:
        return Path(out)
    if config.experiment.output is not None:
        return Path(config.experiment.output)
    return app.output.output_dir / config.kind.value


def run_experiment(
    config: ExperimentConfig,
    *,
    out: Path | None = None,
    seed: int | None = None,
    app: AppConfig | None = None,
    base: Path | None = None,
) -> RunOutcome:
    """Run the config's experiment; ``base`` resolves relative field-file paths."""
    app = app or AppConfig.from_yaml()
    seed = config.experiment.seed if seed is None else seed
    out_dir = output_dir(config, app, out)
    out_dir.mkdir(parents=True, exist_ok=True)
    kind = config.kind
    timings: dict[str, float] = {}
    started = time.perf_counter()
    logger.info("Running %s experiment into %s (seed %d)", kind.value, out_dir, seed)

    outcome = RunOutcome(exit_code=EXIT_OK, out_dir=out_dir)
    ctx: _Context | None = None
    failure: str | None = None
    unexpected: Exception | None = None
    try:
        ctx = _context(config, app, out_dir, seed, base)
        timings["setup"] = time.perf_counter() - started
        _KINDS[kind](ctx)
        outcome.verdicts = dict(ctx.verdicts)
        outcome.summary = list(ctx.summary)
        if not all(ctx.verdicts.values()):
            outcome.exit_code = EXIT_VERDICT
    except NumericFailure as e:
        failure = f"solver failure: {e}"
        outcome.exit_code = EXIT_NUMERIC
    except PcurlError as e:
        failure = f"invalid experiment: {e}"
        outcome.exit_code = EXIT_CONFIG
    except Exception as e:
        failure = f"unexpected error: {type(e).__name__}: {e}"
        outcome.exit_code = EXIT_NUMERIC
        unexpected = e
    if failure is not None:
        logger.error("%s experiment failed: %s", kind.value, failure, exc_info=unexpected)
        outcome.summary.append(failure)
    timings["total"] = time.perf_counter() - started

    report: dict[str, Any] = {
        "kind": kind.value,
        "seed": seed,
        "exit_code": outcome.exit_code,
        "verdicts": outcome.verdicts,
        "failure": failure,
        "reports": {} if ctx is None else ctx.reports,
    }
    write_json(out_dir / "report.json", report)
    write_json(out_dir / "run.json", provenance(config.echo(), seed, timings))
    for name in CSV_SCHEMAS[kind.value]:
        path = out_dir / name
        if not path.exists():
            write_csv(path, CSV_SCHEMAS[kind.value][name], [])
    if unexpected is not None:
        raise unexpected
    logger.info("%s experiment finished with exit code %d", kind.value, outcome.exit_code)
    return outcome
