"""Dense minimization of the step energy over the admissible basis.

The energy here is assembled from mesh operators only, with a pure power law,
and minimized with BFGS on central-difference gradients.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import solve
from scipy.optimize import minimize

from src.errors import InvalidArgument, NumericFailure
from src.mesh.boundary import boundary_load
from src.mesh.grid import FaceField, SurfaceField
from src.mesh.operators import (
    curl,
    curl_matrix,
    edge_average_matrix,
    face_weights,
    magnitude,
)
from src.oracle.basis import DivFreeBasis

logger = logging.getLogger(__name__)

GRADIENT_TOL = 1e-12
DIFFERENCE_STEP = 1e-6
# accepted when BFGS stops on precision loss with the gradient this small
ACCEPT_TOL = 1e-7
MAX_RESTARTS = 4


@dataclass(frozen=True, eq=False)
class ReferenceProblem:
    """One backward-Euler step (dt = inf: the stationary functional) with a power law."""

    p: float
    nu: np.ndarray  # per cell
    f: FaceField
    g: SurfaceField
    h_prev: FaceField | None = None
    dt: float = math.inf

    def __post_init__(self) -> None:
        if self.p <= 1:
            raise InvalidArgument(f"p must exceed 1, got {self.p}")
        if not (self.dt > 0):
            raise InvalidArgument(f"dt must be positive, got {self.dt}")
        if math.isfinite(self.dt) and self.h_prev is None:
            raise InvalidArgument("a finite step needs h_prev")
        nu = np.broadcast_to(np.asarray(self.nu, dtype=float), (self.f.grid.n_cells,))
        object.__setattr__(self, "nu", nu)

    @property
    def grid(self):
        return self.f.grid

    @property
    def mass(self) -> float:
        return 0.0 if math.isinf(self.dt) else 1.0 / self.dt

    def source(self) -> FaceField:
        total = self.f + boundary_load(self.g)
        if self.mass:
            total = total + self.h_prev * self.mass
        return total

    def energy(self, h: FaceField) -> float:
        weights = face_weights(self.grid)
        m = magnitude(curl(h))
        internal = self.grid.cell_volume * float(np.sum(self.nu / self.p * m**self.p))
        energy = internal - float(np.dot(weights * (self.f + boundary_load(self.g)).data, h.data))
        if self.mass:
            delta = h.data - self.h_prev.data
            energy += 0.5 * self.mass * float(np.dot(weights * delta, delta))
        return energy


def numerical_gradient(objective: Callable[[np.ndarray], float], c: np.ndarray) -> np.ndarray:
    """Central differences with steps 1e-6 * max(1, |c_i|)."""
    gradient = np.empty_like(c)
    for i in range(c.size):
        step = DIFFERENCE_STEP * max(1.0, abs(c[i]))
        up, down = c.copy(), c.copy()
        up[i] += step
        down[i] -= step
        gradient[i] = (objective(up) - objective(down)) / (2.0 * step)
    return gradient


def dense_minimize(
    energy: Callable[[FaceField], float],
    basis: DivFreeBasis,
    tol: float = GRADIENT_TOL,
    x0: FaceField | None = None,
) -> FaceField:
    """Minimize a convex energy over the span of the basis.

    BFGS is restarted from its last iterate when it stops early; a run that
    ends above the acceptance tolerance raises NumericFailure.
    """

    def objective(c: np.ndarray) -> float:
        return energy(basis.lift(c))

    def jacobian(c: np.ndarray) -> np.ndarray:
        return numerical_gradient(objective, c)

    c = np.zeros(basis.dimension) if x0 is None else basis.coefficients(x0)
    trace: list[float] = []
    iterations = 0
    for restart in range(MAX_RESTARTS + 1):
        result = minimize(
            objective, c, jac=jacobian, method="BFGS", options={"gtol": tol, "maxiter": 10000}
        )
        c = result.x
        iterations += int(result.nit)
        residual = float(np.linalg.norm(jacobian(c)))
        trace.append(residual)
        logger.debug("Dense BFGS pass %d: %s, gradient %.3e", restart, result.message, residual)
        if result.success or residual <= tol:
            return basis.lift(c)
    if residual <= ACCEPT_TOL:
        logger.warning("Dense minimizer stopped at gradient %.3e after restarts", residual)
        return basis.lift(c)
    raise NumericFailure(
        "dense minimizer did not converge", residual=residual, iterations=iterations, trace=trace
    )


def dense_linear_solve(problem: ReferenceProblem, basis: DivFreeBasis) -> FaceField:
    """Exact minimizer of the quadratic (p = 2) energy by a dense solve."""
    if not math.isclose(problem.p, 2.0):
        raise InvalidArgument(f"the dense linear solve needs p = 2, got {problem.p}")
    grid = basis.grid
    average = edge_average_matrix(grid)
    coefficient = grid.cell_volume * (average.T @ problem.nu)
    curl_basis = curl_matrix(grid) @ basis.matrix
    hessian = curl_basis.T @ (coefficient[:, None] * curl_basis)
    hessian += problem.mass * np.eye(basis.dimension)
    rhs = basis.coefficients(problem.source())
    return basis.lift(solve(hessian, rhs, assume_a="pos"))
