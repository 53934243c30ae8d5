"""Tests for constraint rescaling, the exponent and penalty sweeps and continuous dependence."""

from __future__ import annotations

import math

import numpy as np
import pytest

from src.constitutive.params import ConstitutiveParams
from src.errors import InvalidArgument
from src.evolution.constrained import VIConfig
from src.evolution.data import StepData, TimeSeriesData, feasibility_gap
from src.evolution.solver import StepperConfig, solve_step
from src.evolution.stepper import run
from src.limits.dependence import Channel, continuous_dependence_experiment, perturb
from src.limits.feasibility import (
    constraint_violation,
    rescale_factor,
    rescale_to_feasible,
)
from src.limits.sweeps import (
    SweepBase,
    curl_space_time_norm,
    nonincreasing_with_reversal,
    p_sweep,
    penalty_sweep,
)
from src.mesh.grid import CellField, FaceField, SurfaceField
from src.mesh.operators import curl, magnitude, random_divfree
from tests.conftest import skip_unless_slow

TIGHT = StepperConfig(tolerance=1e-10)


def _series(grid, steps=2, dt=0.25, f=None, h0=None, psi=None) -> TimeSeriesData:
    return TimeSeriesData.stationary(
        [k * dt for k in range(steps + 1)],
        FaceField.zeros(grid) if f is None else f,
        SurfaceField.zeros(grid),
        FaceField.zeros(grid) if h0 is None else h0,
        psi,
    )


def _under(h: FaceField, psi: CellField, fraction: float = 1.0) -> FaceField:
    """Scale h so that max |curl h| / psi equals ``fraction``."""
    ratio = float(np.max(magnitude(curl(h)) / psi.data))
    return h * (fraction / ratio)


def _peaked_source(grid, rng, peak: float, dt: float = 0.25) -> FaceField:
    f = random_divfree(grid, rng)
    step = StepData(dt, f, SurfaceField.zeros(grid))
    h, _ = solve_step(FaceField.zeros(grid), dt, step, ConstitutiveParams(p=2.0), TIGHT)
    return f * (peak / float(np.max(magnitude(curl(h)))))


class TestRescaling:
    def test_factor(self, tiny_grid):
        psi1 = CellField.constant(tiny_grid, 2.0)
        psi2 = CellField.constant(tiny_grid, 1.5)
        assert rescale_factor(psi1, psi2) == pytest.approx(0.75)

    def test_identical_profiles_keep_field(self, tiny_grid, rng):
        psi = CellField.constant(tiny_grid, 1.0)
        h = _under(random_divfree(tiny_grid, rng), psi, 0.9)
        np.testing.assert_allclose(rescale_to_feasible(h, psi, psi).data, h.data)

    def test_rescaled_field_is_feasible(self, tiny_grid, rng):
        for _ in range(20):
            psi1 = CellField(tiny_grid, 0.5 + rng.random(tiny_grid.n_cells))
            psi2 = CellField(tiny_grid, 0.5 + rng.random(tiny_grid.n_cells))
            h1 = _under(random_divfree(tiny_grid, rng), psi1)
            h2 = rescale_to_feasible(h1, psi1, psi2, alpha=0.5)
            assert feasibility_gap(h2, psi2) <= 1e-12

    def test_series_form(self, tiny_grid, rng):
        psi = CellField.constant(tiny_grid, 1.0)
        h = _under(random_divfree(tiny_grid, rng), psi, 0.5)
        out = rescale_to_feasible([h, h], [psi, psi], [psi, psi])
        assert len(out) == 2
        with pytest.raises(InvalidArgument):
            rescale_to_feasible([h], [psi, psi], [psi])

    def test_rejects_infeasible_source(self, tiny_grid, rng):
        psi = CellField.constant(tiny_grid, 1.0)
        h = _under(random_divfree(tiny_grid, rng), psi, 2.0)
        with pytest.raises(InvalidArgument):
            rescale_to_feasible(h, psi, psi)

    def test_rejects_psi_below_alpha(self, tiny_grid):
        psi = CellField.constant(tiny_grid, 1.0)
        with pytest.raises(InvalidArgument):
            rescale_factor(psi, psi, alpha=2.0)


class TestConstraintViolation:
    def test_zero_when_feasible(self, tiny_grid, rng):
        psi = CellField.constant(tiny_grid, 1.0)
        h = _under(random_divfree(tiny_grid, rng), psi, 0.9)
        violation = constraint_violation([h], [psi], 2.0)
        assert violation.linear == 0.0
        assert violation.power == 0.0

    def test_scales_with_time_weights(self, tiny_grid, rng):
        psi = CellField.constant(tiny_grid, 1.0)
        h = _under(random_divfree(tiny_grid, rng), psi, 3.0)
        unit = constraint_violation([h], [psi], 2.0)
        halved = constraint_violation([h], [psi], 2.0, dts=[0.5])
        assert unit.linear > 0
        assert halved.linear == pytest.approx(0.5 * unit.linear)
        assert unit.power > unit.linear

    def test_length_mismatch(self, tiny_grid):
        psi = CellField.constant(tiny_grid, 1.0)
        with pytest.raises(InvalidArgument):
            constraint_violation([FaceField.zeros(tiny_grid)], [psi, psi], 2.0)


class TestNonincreasing:
    def test_monotone(self):
        assert nonincreasing_with_reversal([3.0, 2.0, 2.0, 1.0])

    def test_one_small_reversal_allowed(self):
        assert nonincreasing_with_reversal([3.0, 2.0, 2.1, 1.0], 1, 0.1)

    def test_large_reversal_rejected(self):
        assert not nonincreasing_with_reversal([3.0, 2.0, 2.5, 1.0], 1, 0.1)

    def test_too_many_reversals(self):
        assert not nonincreasing_with_reversal([3.0, 3.1, 2.0, 2.1], 1, 0.1)


class TestPSweep:
    def test_schedule_validation(self, tiny_grid):
        base = SweepBase(_series(tiny_grid), ConstitutiveParams(p=2.0), TIGHT, concurrency=1)
        for schedule in ([8.0, 4.0], [4.0, 128.0], [3.0, 8.0], []):
            with pytest.raises(InvalidArgument):
                p_sweep(base, schedule)

    def test_first_entry_may_equal_p(self, tiny_grid, rng):
        f = 0.1 * random_divfree(tiny_grid, rng)
        base = SweepBase(_series(tiny_grid, f=f), ConstitutiveParams(p=4.0), TIGHT, concurrency=2)
        report = p_sweep(base, [4.0, 8.0])
        assert report.precheck_ok
        assert report.complete
        assert report.entries[0].cauchy_distance is None
        assert report.entries[1].cauchy_distance is not None
        assert set(report.endpoints) == {4.0, 8.0}
        assert "4" in report.entries[0].lq_norms

    def test_precheck_rejects_infeasible_h0(self, tiny_grid, rng):
        h0 = _under(random_divfree(tiny_grid, rng), CellField.constant(tiny_grid, 1.0), 2.0)
        base = SweepBase(_series(tiny_grid, h0=h0), ConstitutiveParams(p=4.0), TIGHT)
        report = p_sweep(base, [8.0, 16.0])
        assert not report.precheck_ok
        assert report.failure.startswith("precheck")
        assert report.entries == []

    def test_space_time_norm_of_zero(self, tiny_grid):
        trajectory = run(_series(tiny_grid), ConstitutiveParams(p=2.0), TIGHT)
        assert curl_space_time_norm(trajectory, 4.0) == 0.0
        assert curl_space_time_norm(trajectory, math.inf) == 0.0


class TestPenaltySweep:
    def test_needs_psi(self, tiny_grid):
        base = SweepBase(_series(tiny_grid), ConstitutiveParams(p=2.0), TIGHT)
        with pytest.raises(InvalidArgument):
            penalty_sweep(base, [0.5, 0.2])

    def test_rejects_increasing_schedule(self, tiny_grid):
        psi = CellField.constant(tiny_grid, 1.0)
        base = SweepBase(_series(tiny_grid, psi=psi), ConstitutiveParams(p=2.0), TIGHT)
        with pytest.raises(InvalidArgument):
            penalty_sweep(base, [0.2, 0.5])

    def test_entries_partition_space_time(self, tiny_grid, rng):
        psi = CellField.constant(tiny_grid, 1.0)
        f = _peaked_source(tiny_grid, rng, 2.0)
        base = SweepBase(_series(tiny_grid, f=f, psi=psi), ConstitutiveParams(p=2.0), TIGHT)
        report = penalty_sweep(base, [0.5, 0.2])
        assert report.failure is None
        assert [e.eps for e in report.entries] == [0.5, 0.2]
        for entry in report.entries:
            assert entry.partition_defect < 1e-12
            assert entry.violation >= 0
            assert entry.penalty_mass >= base.space_time_volume * (1 - 1e-12)
        assert report.violation_trend_ok is not None


class TestContinuousDependence:
    def test_h0_channel_linear_case(self, tiny_grid, rng):
        h0 = random_divfree(tiny_grid, rng)
        base = SweepBase(_series(tiny_grid, h0=h0), ConstitutiveParams(p=2.0), TIGHT, concurrency=1)
        report = continuous_dependence_experiment(base, "h0", [0.1, 0.01])
        assert report.failure is None
        assert report.contraction_ok
        assert report.passed
        for entry in report.entries:
            # |dh(0)|^2 <= lhs <= |dh(0)|^2 + |dh(0)|^2 / 2 for the quadratic law
            assert 1 - 1e-6 <= entry.ratio <= 1.5 + 1e-6

    def test_f_channel(self, tiny_grid, rng):
        f = random_divfree(tiny_grid, rng)
        base = SweepBase(_series(tiny_grid, f=f), ConstitutiveParams(p=3.0), TIGHT, concurrency=2)
        report = continuous_dependence_experiment(base, Channel.F, [0.5, 0.25, 0.125])
        assert report.failure is None
        assert len(report.entries) == 3
        assert report.fitted_constant is not None
        assert report.contraction_ok is None

    def test_psi_channel_needs_constraint(self, tiny_grid):
        base = SweepBase(_series(tiny_grid), ConstitutiveParams(p=2.0), TIGHT)
        with pytest.raises(InvalidArgument):
            continuous_dependence_experiment(base, "psi", [0.1])

    def test_rejects_increasing_deltas(self, tiny_grid):
        base = SweepBase(_series(tiny_grid), ConstitutiveParams(p=2.0), TIGHT)
        with pytest.raises(InvalidArgument):
            continuous_dependence_experiment(base, "f", [0.1, 0.2])

    def test_h0_perturbation_stays_feasible(self, tiny_grid, rng):
        psi = CellField.constant(tiny_grid, 1.0)
        h0 = _under(random_divfree(tiny_grid, rng), psi, 0.99)
        data = _series(tiny_grid, h0=h0, psi=psi)
        moved = perturb(data, Channel.H0, 1.0, random_divfree(tiny_grid, rng))
        assert feasibility_gap(moved.h0, psi) <= 1e-9

    def test_psi_perturbation_raises_profile(self, tiny_grid):
        psi = CellField.constant(tiny_grid, 1.0)
        moved = perturb(_series(tiny_grid, psi=psi), Channel.PSI, 0.25, None)
        assert all(np.allclose(sample.data, 1.25) for sample in moved.psi)

    @skip_unless_slow
    def test_psi_channel_constrained(self, tiny_grid, rng):
        psi = CellField.constant(tiny_grid, 1.0)
        f = _peaked_source(tiny_grid, rng, 2.0)
        base = SweepBase(
            _series(tiny_grid, f=f, psi=psi), ConstitutiveParams(p=2.0), TIGHT, concurrency=2
        )
        vi = VIConfig(eps_schedule=(0.5, 0.2, 0.1), feasibility_tol=1e-4, max_shift_rounds=200)
        report = continuous_dependence_experiment(base, Channel.PSI, [0.2, 0.1, 0.05], vi=vi)
        assert report.failure is None
        assert all(entry.rhs > 0 for entry in report.entries)
