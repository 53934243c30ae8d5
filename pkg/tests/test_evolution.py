"""Tests for the step energy, the projected descent solver and time stepping."""

from __future__ import annotations

import csv
import math

import numpy as np
import pytest

from src.constitutive.params import ConstitutiveParams
from src.errors import InvalidArgument
from src.evolution.constrained import VIConfig, solve_constrained_step
from src.evolution.data import StepData, TimeSeriesData, divergence_defect, feasibility_gap
from src.evolution.energy import StepProblem, step_energy
from src.evolution.export import INDEX_COLUMNS, export_trajectory, snapshot_name
from src.evolution.solver import StepperConfig, solve_step
from src.evolution.stepper import run, run_vi
from src.mesh.grid import CellField, FaceField, SurfaceField
from src.mesh.operators import curl, inner, l2_norm, magnitude, random_divfree
from src.mesh.snapshot import read_field

TIGHT = StepperConfig(tolerance=1e-10)


def _series(grid, steps=4, dt=0.1, f=None, g=None, h0=None, psi=None) -> TimeSeriesData:
    return TimeSeriesData.stationary(
        [k * dt for k in range(steps + 1)],
        FaceField.zeros(grid) if f is None else f,
        SurfaceField.zeros(grid) if g is None else g,
        FaceField.zeros(grid) if h0 is None else h0,
        psi,
    )


def _step(grid, f=None, psi=None) -> StepData:
    return StepData(
        0.1, FaceField.zeros(grid) if f is None else f, SurfaceField.zeros(grid), psi
    )


class TestStepEnergy:
    @pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
    def test_gradient_matches_directional_derivative(self, tiny_grid, rng, p):
        f = random_divfree(tiny_grid, rng)
        g = SurfaceField(tiny_grid, rng.standard_normal(tiny_grid.n_surface))
        data = StepData(0.1, f, g)
        h_prev = random_divfree(tiny_grid, rng)
        problem = StepProblem.build(h_prev, 0.3, data, ConstitutiveParams(p=p))
        h = random_divfree(tiny_grid, rng)
        v = FaceField(tiny_grid, rng.standard_normal(tiny_grid.n_faces))
        eps = 1e-6
        numeric = (problem.energy(h + eps * v) - problem.energy(h - eps * v)) / (2 * eps)
        assert numeric == pytest.approx(inner(problem.gradient(h), v), rel=1e-5)

    def test_stationary_drops_mass_term(self, tiny_grid, rng):
        h = random_divfree(tiny_grid, rng)
        params = ConstitutiveParams(p=2.0)
        data = _step(tiny_grid)
        energy = step_energy(h, FaceField.zeros(tiny_grid), math.inf, data, params)
        assert energy == pytest.approx(0.5 * l2_norm(curl(h)) ** 2, rel=1e-12)

    def test_rejects_non_positive_dt(self, tiny_grid):
        with pytest.raises(InvalidArgument):
            StepProblem.build(
                FaceField.zeros(tiny_grid), 0.0, _step(tiny_grid), ConstitutiveParams(p=2.0)
            )


class TestSolveStep:
    def test_zero_data_stays_zero(self, tiny_grid):
        h, diag = solve_step(
            FaceField.zeros(tiny_grid), 0.1, _step(tiny_grid), ConstitutiveParams(p=3.0), TIGHT
        )
        assert l2_norm(h) == 0.0
        assert diag.iterations == 0
        assert diag.converged

    def test_energy_trace_never_increases(self, tiny_grid, rng):
        f = 5 * random_divfree(tiny_grid, rng)
        _, diag = solve_step(
            FaceField.zeros(tiny_grid), 0.5, _step(tiny_grid, f), ConstitutiveParams(p=3.0), TIGHT
        )
        trace = diag.energy_trace
        assert all(b <= a + 1e-12 * (1 + abs(a)) for a, b in zip(trace, trace[1:]))
        assert diag.converged

    def test_result_is_admissible(self, skewed_grid, rng):
        f = FaceField(skewed_grid, rng.standard_normal(skewed_grid.n_faces))
        params = ConstitutiveParams(p=3.0)
        h, _ = solve_step(FaceField.zeros(skewed_grid), 0.2, _step(skewed_grid, f), params, TIGHT)
        assert divergence_defect(h) < 1e-10
        assert h.boundary_max() == 0.0


class TestStepperConfig:
    def test_defaults_valid(self):
        assert StepperConfig().tolerance == 1e-9

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"max_iterations": 0},
            {"tolerance": 0.0},
            {"armijo": 0.9},
            {"backtrack": 1.0},
            {"step_min": 2.0, "step_max": 1.0},
        ],
    )
    def test_rejects(self, kwargs):
        with pytest.raises(InvalidArgument):
            StepperConfig(**kwargs)


class TestTimeSeriesData:
    def test_rejects_decreasing_times(self, tiny_grid):
        zero_f, zero_g = FaceField.zeros(tiny_grid), SurfaceField.zeros(tiny_grid)
        with pytest.raises(InvalidArgument):
            TimeSeriesData((0.0, 0.2, 0.1), [zero_f] * 3, [zero_g] * 3, zero_f)

    def test_rejects_length_mismatch(self, tiny_grid):
        zero_f, zero_g = FaceField.zeros(tiny_grid), SurfaceField.zeros(tiny_grid)
        with pytest.raises(InvalidArgument):
            TimeSeriesData((0.0, 0.1), [zero_f], [zero_g] * 2, zero_f)

    def test_rejects_non_solenoidal_h0(self, tiny_grid, rng):
        h0 = FaceField(tiny_grid, rng.standard_normal(tiny_grid.n_faces))
        with pytest.raises(InvalidArgument):
            _series(tiny_grid, h0=h0)

    def test_rejects_infeasible_h0(self, tiny_grid, rng):
        h0 = random_divfree(tiny_grid, rng)
        psi = CellField.constant(tiny_grid, 1e-6)
        with pytest.raises(InvalidArgument):
            _series(tiny_grid, h0=h0, psi=psi)

    def test_rejects_non_positive_psi(self, tiny_grid):
        with pytest.raises(InvalidArgument):
            _series(tiny_grid, psi=CellField.zeros(tiny_grid))

    def test_helpers(self, tiny_grid, rng):
        data = _series(tiny_grid, steps=3, dt=0.5, f=random_divfree(tiny_grid, rng))
        assert data.steps == 3
        assert data.horizon == pytest.approx(1.5)
        assert data.dt(2) == pytest.approx(0.5)
        doubled = data.scaled(f_scale=2.0)
        np.testing.assert_allclose(doubled.f[1].data, 2 * data.f[1].data)


class TestRun:
    def test_zero_data_zero_trajectory(self, tiny_grid):
        trajectory = run(_series(tiny_grid), ConstitutiveParams(p=3.0), TIGHT)
        assert len(trajectory) == 5
        assert all(l2_norm(h) == 0.0 for h in trajectory.states)
        assert trajectory.energies == [0.0] * 5

    def test_free_decay(self, tiny_grid, rng):
        h0 = random_divfree(tiny_grid, rng)
        trajectory = run(_series(tiny_grid, h0=h0), ConstitutiveParams(p=2.0), TIGHT)
        norms = trajectory.l2_norms()
        assert all(b < a for a, b in zip(norms, norms[1:]))
        assert all(divergence_defect(h) < 1e-10 for h in trajectory.states)

    def test_warm_start_reproduces(self, tiny_grid, rng):
        f = 3 * random_divfree(tiny_grid, rng)
        data = _series(tiny_grid, f=f, steps=3)
        params = ConstitutiveParams(p=3.0)
        cold = run(data, params, TIGHT)
        warm = run(data, params, TIGHT, warm_start=cold)
        assert l2_norm(warm.final - cold.final) <= 1e-6 * (1 + l2_norm(cold.final))

    @pytest.mark.parametrize("p", [3.0, 1.5])
    def test_trajectories_contract(self, tiny_grid, rng, p):
        f = random_divfree(tiny_grid, rng)
        params = ConstitutiveParams(p=p)
        first = run(_series(tiny_grid, f=f, h0=random_divfree(tiny_grid, rng)), params, TIGHT)
        second = run(_series(tiny_grid, f=f, h0=random_divfree(tiny_grid, rng)), params, TIGHT)
        gaps = [l2_norm(a - b) for a, b in zip(first.states, second.states)]
        assert gaps[0] > 0
        assert all(later <= earlier + 1e-8 for earlier, later in zip(gaps, gaps[1:]))

    def test_repeat_runs_are_bitwise_equal(self, tiny_grid, rng):
        f, h0 = random_divfree(tiny_grid, rng), random_divfree(tiny_grid, rng)
        data = _series(tiny_grid, f=f, h0=h0)
        params = ConstitutiveParams(p=3.0)
        first, second = run(data, params, TIGHT), run(data, params, TIGHT)
        assert all(np.array_equal(a.data, b.data) for a, b in zip(first.states, second.states))
        assert first.energies == second.energies

    def test_warm_start_length_checked(self, tiny_grid):
        data = _series(tiny_grid, steps=3)
        params = ConstitutiveParams(p=2.0)
        short = run(_series(tiny_grid, steps=2), params, TIGHT)
        with pytest.raises(InvalidArgument):
            run(data, params, TIGHT, warm_start=short)


def _scaled_source(grid, rng, peak: float) -> FaceField:
    """A source whose unconstrained p = 2 step from rest peaks at |curl h| = peak."""
    f = random_divfree(grid, rng)
    h, _ = solve_step(FaceField.zeros(grid), 0.5, _step(grid, f), ConstitutiveParams(p=2.0), TIGHT)
    return f * (peak / float(np.max(magnitude(curl(h)))))


class TestConstrainedStep:
    def test_reaches_feasibility(self, tiny_grid, rng):
        f = _scaled_source(tiny_grid, rng, 2.0)
        psi = CellField.constant(tiny_grid, 1.0)
        vi = VIConfig(eps_schedule=(0.5, 0.2, 0.1), feasibility_tol=1e-3)
        outcome = solve_constrained_step(
            FaceField.zeros(tiny_grid), 0.5, _step(tiny_grid, f, psi),
            ConstitutiveParams(p=2.0), TIGHT, vi, x0=FaceField.zeros(tiny_grid),
        )
        assert outcome.max_violation <= 1e-3
        assert outcome.complementarity_gap <= 1e-3
        assert np.all(outcome.shift >= 0)
        assert feasibility_gap(outcome.h, psi) <= 1e-3
        assert [entry[0] for entry in outcome.eps_trace] == [0.5, 0.2, 0.1]

    def test_inactive_constraint_is_free_step(self, tiny_grid, rng):
        f = _scaled_source(tiny_grid, rng, 0.5)
        psi = CellField.constant(tiny_grid, 1.0)
        params = ConstitutiveParams(p=2.0)
        free, _ = solve_step(FaceField.zeros(tiny_grid), 0.5, _step(tiny_grid, f), params, TIGHT)
        outcome = solve_constrained_step(
            FaceField.zeros(tiny_grid), 0.5, _step(tiny_grid, f, psi),
            params, TIGHT, VIConfig(), x0=FaceField.zeros(tiny_grid),
        )
        assert outcome.shift_rounds == 0
        assert l2_norm(outcome.h - free) <= 1e-6 * l2_norm(free)

    def test_needs_psi(self, tiny_grid):
        with pytest.raises(InvalidArgument):
            solve_constrained_step(
                FaceField.zeros(tiny_grid), 0.5, _step(tiny_grid),
                ConstitutiveParams(p=2.0), TIGHT, VIConfig(),
            )

    @pytest.mark.parametrize(
        "kwargs",
        [{"eps_schedule": ()}, {"eps_schedule": (0.1, 0.2)}, {"eps_schedule": (1.5,)},
         {"feasibility_tol": 0.0}, {"max_shift_rounds": -1}],
    )
    def test_vi_config_rejects(self, kwargs):
        with pytest.raises(InvalidArgument):
            VIConfig(**kwargs)


class TestRunVI:
    def test_trajectory_stays_feasible(self, tiny_grid, rng):
        f = _scaled_source(tiny_grid, rng, 2.0)
        psi = CellField.constant(tiny_grid, 1.0)
        data = _series(tiny_grid, steps=2, dt=0.5, f=f, psi=psi)
        vi = VIConfig(eps_schedule=(0.5, 0.2, 0.1), feasibility_tol=1e-3)
        trajectory = run_vi(data, ConstitutiveParams(p=2.0), TIGHT, vi)
        assert len(trajectory.shifts) == 3
        assert max(trajectory.violations) <= 1e-3
        for h in trajectory.states:
            assert feasibility_gap(h, psi) <= 1e-3

    def test_needs_psi(self, tiny_grid):
        with pytest.raises(InvalidArgument):
            run_vi(_series(tiny_grid), ConstitutiveParams(p=2.0), TIGHT, VIConfig())


class TestExport:
    def test_index_and_snapshots(self, tmp_path, tiny_grid, rng):
        h0 = random_divfree(tiny_grid, rng)
        trajectory = run(_series(tiny_grid, steps=2, h0=h0), ConstitutiveParams(p=2.0), TIGHT)
        index = export_trajectory(trajectory, tmp_path / "traj")
        with open(index) as f:
            rows = list(csv.reader(f))
        assert tuple(rows[0]) == INDEX_COLUMNS
        assert len(rows) == 4
        assert float(rows[2][1]) == pytest.approx(0.2)
        loaded = read_field(tmp_path / "traj" / snapshot_name(2), tiny_grid)
        np.testing.assert_array_equal(loaded.data, trajectory.final.data)

    def test_snapshots_optional(self, tmp_path, tiny_grid):
        trajectory = run(_series(tiny_grid, steps=1), ConstitutiveParams(p=2.0), TIGHT)
        export_trajectory(trajectory, tmp_path, snapshots=False)
        assert not (tmp_path / snapshot_name(0)).exists()
