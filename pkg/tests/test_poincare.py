"""Tests for the discrete Poincaré and trace constant estimators."""

from __future__ import annotations

import math

import pytest

from src.errors import InvalidArgument
from src.mesh.grid import FaceField
from src.mesh.operators import curl, l2_norm, lp_norm, random_divfree
from src.mesh.poincare import (
    conjugate,
    data_exponents,
    estimate_poincare,
    estimate_trace_constant,
    lowest_mode,
    sobolev_exponent,
    trace_exponent,
)


class TestExponents:
    def test_sobolev_exponent(self):
        assert sobolev_exponent(2.0) == pytest.approx(6.0)
        assert sobolev_exponent(1.5) == pytest.approx(3.0)
        assert math.isinf(sobolev_exponent(3.0))
        assert math.isinf(sobolev_exponent(4.0))

    def test_trace_exponent(self):
        assert trace_exponent(2.0) == pytest.approx(4.0)
        assert math.isinf(trace_exponent(5.0))

    def test_conjugate(self):
        assert conjugate(2.0) == pytest.approx(2.0)
        assert conjugate(3.0) == pytest.approx(1.5)
        assert conjugate(math.inf) == 1.0

    def test_data_exponents_capped(self):
        q, r = data_exponents(4.0)
        assert math.isfinite(q) and math.isfinite(r)


class TestLowestMode:
    def test_mode_is_normalized_and_admissible(self, tiny_grid):
        eigenvalue, vector = lowest_mode(tiny_grid)
        mode = FaceField(tiny_grid, vector)
        assert eigenvalue > 0
        assert l2_norm(mode) == pytest.approx(1.0, rel=1e-10)
        assert mode.boundary_max() == 0.0

    def test_rayleigh_quotient_matches_eigenvalue(self, tiny_grid):
        eigenvalue, vector = lowest_mode(tiny_grid)
        mode = FaceField(tiny_grid, vector)
        assert l2_norm(curl(mode)) ** 2 == pytest.approx(eigenvalue, rel=1e-6)


class TestEstimatePoincare:
    def test_quadratic_pair_uses_eigenvalue(self, tiny_grid):
        estimate = estimate_poincare(tiny_grid, 2.0, 2.0)
        eigenvalue, _ = lowest_mode(tiny_grid)
        assert estimate.method == "eigen"
        assert float(estimate) == pytest.approx(1.0 / math.sqrt(eigenvalue))

    def test_quadratic_pair_bounds_random_fields(self, tiny_grid, rng):
        estimate = float(estimate_poincare(tiny_grid, 2.0, 2.0))
        for _ in range(5):
            v = random_divfree(tiny_grid, rng)
            assert l2_norm(v) / l2_norm(curl(v)) <= estimate * (1 + 1e-8)

    def test_ascent_beats_its_starting_mode(self, tiny_grid):
        _, vector = lowest_mode(tiny_grid)
        mode = FaceField(tiny_grid, vector)
        start = lp_norm(mode, 3.0) / lp_norm(curl(mode), 3.0)
        estimate = estimate_poincare(tiny_grid, 3.0, 3.0)
        assert estimate.method == "ascent"
        assert float(estimate) >= start * (1 - 1e-12)

    def test_rejects_inadmissible_exponent(self, tiny_grid):
        with pytest.raises(InvalidArgument):
            estimate_poincare(tiny_grid, 2.0, 7.0)

    def test_rejects_sup_at_three(self, tiny_grid):
        with pytest.raises(InvalidArgument):
            estimate_poincare(tiny_grid, 3.0, math.inf)

    def test_rejects_p_at_most_one(self, tiny_grid):
        with pytest.raises(InvalidArgument):
            estimate_poincare(tiny_grid, 1.0, 1.0)


class TestTraceConstant:
    def test_positive_and_finite(self, tiny_grid):
        estimate = estimate_trace_constant(tiny_grid, 2.0, 2.0)
        assert 0 < float(estimate) < math.inf

    def test_rejects_inadmissible_exponent(self, tiny_grid):
        with pytest.raises(InvalidArgument):
            estimate_trace_constant(tiny_grid, 2.0, 5.0)
