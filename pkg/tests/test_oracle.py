"""Tests for the dense reference solvers against the production stepper."""

from __future__ import annotations

import math

import numpy as np
import pytest

from src.constitutive.params import ConstitutiveParams
from src.errors import InvalidArgument
from src.evolution.data import StepData
from src.evolution.solver import StepperConfig, solve_step
from src.limits.feasibility import feasible_test_fields
from src.mesh.grid import CellField, FaceField, SurfaceField, build_grid
from src.mesh.operators import curl, div, face_weights, l2_norm, magnitude, random_divfree
from src.oracle.basis import divfree_basis
from src.oracle.constrained import constrained_reference
from src.oracle.dense import ReferenceProblem, dense_linear_solve, dense_minimize

TIGHT = StepperConfig(tolerance=1e-11)
DT = 0.25


def _step(grid, rng, p: float) -> tuple[ReferenceProblem, FaceField]:
    h_prev = random_divfree(grid, rng)
    f = random_divfree(grid, rng)
    g = SurfaceField.zeros(grid)
    problem = ReferenceProblem(p=p, nu=1.0, f=f, g=g, h_prev=h_prev, dt=DT)
    h, _ = solve_step(h_prev, DT, StepData(DT, f, g), ConstitutiveParams(p=p), TIGHT)
    return problem, h


class TestDivFreeBasis:
    def test_orthonormal(self, skewed_grid):
        basis = divfree_basis(skewed_grid)
        gram = basis.matrix.T @ (face_weights(skewed_grid)[:, None] * basis.matrix)
        np.testing.assert_allclose(gram, np.eye(basis.dimension), atol=1e-10)

    def test_dimension(self, skewed_grid):
        basis = divfree_basis(skewed_grid)
        expected = skewed_grid.interior_faces.size - skewed_grid.n_cells + 1
        assert basis.dimension == expected

    def test_columns_are_admissible(self, skewed_grid, rng):
        basis = divfree_basis(skewed_grid)
        h = basis.lift(rng.standard_normal(basis.dimension))
        assert np.max(np.abs(div(h).data)) < 1e-10
        assert h.boundary_max() == 0.0

    def test_project_keeps_admissible_fields(self, tiny_grid, rng):
        h = random_divfree(tiny_grid, rng)
        assert l2_norm(divfree_basis(tiny_grid).project(h) - h) < 1e-10 * l2_norm(h)

    def test_rejects_large_grids(self):
        with pytest.raises(InvalidArgument):
            divfree_basis(build_grid([1, 1, 1], [12, 12, 12]))


class TestReferenceProblem:
    def test_finite_step_needs_previous_state(self, tiny_grid):
        zero = FaceField.zeros(tiny_grid)
        with pytest.raises(InvalidArgument):
            ReferenceProblem(p=2.0, nu=1.0, f=zero, g=SurfaceField.zeros(tiny_grid), dt=0.1)

    def test_stationary_has_no_mass(self, tiny_grid):
        zero = FaceField.zeros(tiny_grid)
        problem = ReferenceProblem(p=2.0, nu=1.0, f=zero, g=SurfaceField.zeros(tiny_grid))
        assert problem.mass == 0.0
        assert problem.energy(zero) == 0.0


class TestDenseSolvers:
    def test_linear_solve_matches_stepper(self, tiny_grid, rng):
        problem, h = _step(tiny_grid, rng, 2.0)
        reference = dense_linear_solve(problem, divfree_basis(tiny_grid))
        assert l2_norm(h - reference) <= 1e-7 * l2_norm(reference)

    def test_linear_solve_needs_quadratic_law(self, tiny_grid, rng):
        problem, _ = _step(tiny_grid, rng, 3.0)
        with pytest.raises(InvalidArgument):
            dense_linear_solve(problem, divfree_basis(tiny_grid))

    def test_minimize_matches_stepper(self, tiny_grid, rng):
        problem, h = _step(tiny_grid, rng, 3.0)
        reference = dense_minimize(problem.energy, divfree_basis(tiny_grid), x0=problem.h_prev)
        assert l2_norm(h - reference) <= 1e-4 * l2_norm(reference)
        assert problem.energy(h) == pytest.approx(problem.energy(reference), rel=1e-7, abs=1e-12)

    def test_minimize_agrees_with_linear_solve(self, tiny_grid, rng):
        problem, _ = _step(tiny_grid, rng, 2.0)
        basis = divfree_basis(tiny_grid)
        exact = dense_linear_solve(problem, basis)
        assert l2_norm(dense_minimize(problem.energy, basis) - exact) <= 1e-4 * l2_norm(exact)


class TestConstrainedReference:
    def test_inactive_bound_matches_linear_solve(self, tiny_grid, rng):
        problem, _ = _step(tiny_grid, rng, 2.0)
        basis = divfree_basis(tiny_grid)
        exact = dense_linear_solve(problem, basis)
        bound = 10.0 * float(np.max(magnitude(curl(exact)))) + 1.0
        result = constrained_reference(problem, CellField.constant(tiny_grid, bound), basis=basis)
        assert l2_norm(result.h - exact) <= 1e-6 * l2_norm(exact)

    def test_active_bound(self, tiny_grid, rng):
        g = SurfaceField.zeros(tiny_grid)
        f = random_divfree(tiny_grid, rng)
        basis = divfree_basis(tiny_grid)
        free = dense_linear_solve(ReferenceProblem(p=2.0, nu=1.0, f=f, g=g), basis)
        f = f * (3.0 / float(np.max(magnitude(curl(free)))))
        problem = ReferenceProblem(p=2.0, nu=1.0, f=f, g=g)
        psi = CellField.constant(tiny_grid, 1.0)
        result = constrained_reference(problem, psi)
        assert np.max(result.magnitudes) <= 1.0 + 1e-9
        assert np.max(magnitude(curl(result.h))) <= 1.0 + 1e-5
        assert math.isclose(float(np.max(result.magnitudes)), 1.0, rel_tol=1e-6)
        best = problem.energy(result.h)
        for v in feasible_test_fields(psi, 10, rng):
            assert best <= problem.energy(v) + 1e-6 * (1.0 + abs(best))

    def test_rejects_negative_bound(self, tiny_grid):
        zero = FaceField.zeros(tiny_grid)
        problem = ReferenceProblem(p=2.0, nu=1.0, f=zero, g=SurfaceField.zeros(tiny_grid))
        with pytest.raises(InvalidArgument):
            constrained_reference(problem, CellField.constant(tiny_grid, -1.0))
