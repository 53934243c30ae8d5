"""ADMM reference for the step energy under the pointwise bound |curl h| <= Psi.

The curl is split per cell: every (cell, edge) pair carries u = sqrt(mu) w_e,
so the co-located magnitude of a cell is the Euclidean norm of its block.
Minimizes over (c, u) with u = A c, A = S curl B, by scaled ADMM with
residual balancing; the u-step is a radial prox clipped at Psi.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_factor, cho_solve

from src.errors import InvalidArgument, NumericFailure
from src.mesh.grid import CellField, FaceField, GridSpec
from src.mesh.operators import curl_matrix, edge_average_matrix
from src.oracle.basis import DivFreeBasis, divfree_basis
from src.oracle.dense import ReferenceProblem

logger = logging.getLogger(__name__)

BALANCE_EVERY = 10
BALANCE_RATIO = 10.0
RHO_FACTOR = 2.0
BISECTION_STEPS = 80


@dataclass
class ConstrainedResult:
    h: FaceField
    w: np.ndarray  # split curl, one entry per (cell, edge) pair
    magnitudes: np.ndarray  # |w| per cell
    residual_trace: list[float] = field(default_factory=list)
    iterations: int = 0


@dataclass(frozen=True, eq=False)
class _Split:
    matrix: sp.csr_matrix  # pairs x edges
    owner: np.ndarray  # cell of every pair
    n_cells: int

    @classmethod
    def build(cls, grid: GridSpec) -> _Split:
        average = edge_average_matrix(grid).tocoo()
        pairs = np.arange(average.nnz)
        matrix = sp.csr_matrix(
            (np.sqrt(average.data), (pairs, average.col)), shape=(average.nnz, grid.n_edges)
        )
        return cls(matrix, average.row.copy(), grid.n_cells)

    def norms(self, u: np.ndarray) -> np.ndarray:
        return np.sqrt(np.bincount(self.owner, weights=u * u, minlength=self.n_cells))


def _radius(nu: np.ndarray, p: float, rho: float, size: np.ndarray) -> np.ndarray:
    """Root r in [0, size] of nu r^(p-1) + rho r = rho size, by bisection."""
    lo, hi = np.zeros_like(size), size.copy()
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        above = nu * mid ** (p - 1.0) + rho * mid > rho * size
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
    return 0.5 * (lo + hi)


def constrained_reference(
    problem: ReferenceProblem,
    psi: CellField,
    tol: float = 1e-9,
    *,
    basis: DivFreeBasis | None = None,
    rho: float = 1.0,
    max_iterations: int = 200_000,
) -> ConstrainedResult:
    """Minimizer of the step energy over {|curl h| <= Psi} on a tiny grid."""
    grid = problem.grid
    if psi.grid != grid:
        raise InvalidArgument("Psi lives on a different grid")
    if np.any(psi.data < 0):
        raise InvalidArgument("Psi must be nonnegative")
    basis = divfree_basis(grid) if basis is None else basis
    split = _Split.build(grid)
    volume = grid.cell_volume
    p = problem.p

    operator = np.asarray(split.matrix @ (curl_matrix(grid) @ basis.matrix))
    gram = volume * operator.T @ operator
    identity = np.eye(basis.dimension)
    rhs = basis.coefficients(problem.source())
    psi_cells = psi.data

    def factor(r: float):
        return cho_factor(problem.mass * identity + r * gram)

    def prox(z: np.ndarray, r: float) -> np.ndarray:
        size = split.norms(z)
        radius = np.minimum(_radius(problem.nu, p, r, size), psi_cells)
        scale = np.divide(radius, size, out=np.zeros_like(size), where=size > 0)
        return z * scale[split.owner]

    chol = factor(rho)
    u = np.zeros(operator.shape[0])
    y = np.zeros_like(u)
    trace: list[float] = []
    rhs_scale = 1.0 + float(np.linalg.norm(rhs))
    for iteration in range(1, max_iterations + 1):
        c = cho_solve(chol, rhs + rho * volume * operator.T @ (u - y))
        ac = operator @ c
        u_old = u
        u = prox(ac + y, rho)
        y = y + ac - u

        primal = math.sqrt(volume) * float(np.linalg.norm(ac - u))
        dual = rho * volume * float(np.linalg.norm(operator.T @ (u - u_old)))
        trace.append(primal)
        u_size = math.sqrt(volume) * float(np.linalg.norm(u))
        if primal <= tol * (1.0 + u_size) and dual <= tol * rhs_scale:
            logger.debug("ADMM converged in %d iterations, consistency %.3e", iteration, primal)
            return ConstrainedResult(
                h=basis.lift(c),
                w=u,
                magnitudes=split.norms(u),
                residual_trace=trace,
                iterations=iteration,
            )
        if iteration % BALANCE_EVERY == 0:
            if primal > BALANCE_RATIO * dual:
                rho *= RHO_FACTOR
                y = y / RHO_FACTOR
                chol = factor(rho)
            elif dual > BALANCE_RATIO * primal:
                rho /= RHO_FACTOR
                y = y * RHO_FACTOR
                chol = factor(rho)

    raise NumericFailure(
        "constrained reference did not converge",
        residual=trace[-1] if trace else None,
        iterations=max_iterations,
        trace=trace,
    )
