"""Tests for the a-priori energy ledger."""

from __future__ import annotations

import pytest

from src.constitutive.params import ConstitutiveParams
from src.errors import InvalidArgument
from src.evolution.data import TimeSeriesData
from src.evolution.ledger import compare_refinement, energy_ledger, space_time_norm
from src.evolution.solver import StepperConfig
from src.evolution.stepper import run
from src.mesh.grid import FaceField, SurfaceField
from src.mesh.operators import random_divfree

TIGHT = StepperConfig(tolerance=1e-10)


def _data(grid, f, h0, steps=4, dt=0.25) -> TimeSeriesData:
    return TimeSeriesData.stationary(
        [k * dt for k in range(steps + 1)], f, SurfaceField.zeros(grid), h0
    )


class TestEnergyLedger:
    @pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
    def test_forced_run(self, tiny_grid, rng, p):
        data = _data(tiny_grid, random_divfree(tiny_grid, rng), random_divfree(tiny_grid, rng))
        report = energy_ledger(run(data, ConstitutiveParams(p=p), TIGHT))
        assert report.holds
        assert report.constant is not None and report.constant > 0
        assert report.gronwall_holds
        assert report.dissipation_confirmed
        assert report.lhs >= report.max_l2_sq

    def test_zero_data_is_zero_over_zero(self, tiny_grid):
        zero = FaceField.zeros(tiny_grid)
        report = energy_ledger(run(_data(tiny_grid, zero, zero), ConstitutiveParams(p=2.0), TIGHT))
        assert report.zero_over_zero
        assert report.constant is None
        assert report.holds
        assert report.lhs == 0.0

    def test_free_decay_dissipates(self, tiny_grid, rng):
        h0 = random_divfree(tiny_grid, rng)
        data = _data(tiny_grid, FaceField.zeros(tiny_grid), h0)
        report = energy_ledger(run(data, ConstitutiveParams(p=2.0), TIGHT))
        assert report.f_term == 0.0
        assert report.max_l2_sq == pytest.approx(report.h0_term)
        assert report.time_derivative_sq > 0

    def test_needs_a_step(self, tiny_grid):
        zero = FaceField.zeros(tiny_grid)
        trajectory = run(_data(tiny_grid, zero, zero, steps=1), ConstitutiveParams(p=2.0), TIGHT)
        trajectory.states = trajectory.states[:1]
        with pytest.raises(InvalidArgument):
            energy_ledger(trajectory)

    def test_space_time_norm_empty(self):
        assert space_time_norm([], [], 2.0) == 0.0


class TestRefinement:
    def test_halving_dt_keeps_constant(self, tiny_grid, rng):
        f, h0 = random_divfree(tiny_grid, rng), random_divfree(tiny_grid, rng)
        params = ConstitutiveParams(p=3.0)
        coarse = energy_ledger(run(_data(tiny_grid, f, h0, steps=10, dt=0.1), params, TIGHT))
        fine = energy_ledger(run(_data(tiny_grid, f, h0, steps=20, dt=0.05), params, TIGHT))
        report = compare_refinement(coarse, fine, 10)
        assert report.refined_steps == 20
        assert report.ratio == pytest.approx(fine.constant / coarse.constant)
        assert abs(report.ratio - 1.0) <= 0.1
        assert report.stable

    def test_shifted_constant_is_unstable(self, tiny_grid, rng):
        data = _data(tiny_grid, random_divfree(tiny_grid, rng), random_divfree(tiny_grid, rng))
        coarse = energy_ledger(run(data, ConstitutiveParams(p=3.0), TIGHT))
        fine = coarse.model_copy(update={"constant": 1.2 * coarse.constant})
        report = compare_refinement(coarse, fine, 4)
        assert report.ratio == pytest.approx(1.2)
        assert not report.stable

    def test_zero_data_is_stable(self, tiny_grid):
        zero = FaceField.zeros(tiny_grid)
        params = ConstitutiveParams(p=3.0)
        coarse = energy_ledger(run(_data(tiny_grid, zero, zero, steps=2), params, TIGHT))
        fine = energy_ledger(run(_data(tiny_grid, zero, zero, steps=4, dt=0.125), params, TIGHT))
        report = compare_refinement(coarse, fine, 2)
        assert report.ratio is None
        assert report.stable

    def test_one_sided_zero_over_zero_is_unstable(self, tiny_grid, rng):
        data = _data(tiny_grid, random_divfree(tiny_grid, rng), random_divfree(tiny_grid, rng))
        coarse = energy_ledger(run(data, ConstitutiveParams(p=3.0), TIGHT))
        fine = coarse.model_copy(update={"constant": None, "zero_over_zero": True})
        assert not compare_refinement(coarse, fine, 4).stable
