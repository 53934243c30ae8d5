"""Discrete Poincaré and trace constants over divergence-free fields.

estimate_poincare returns sup ||v||_q / ||curl v||_p. The quadratic pair
p = q = 2 is a generalized eigenvalue problem; every other pair is estimated
by projected ascent on the log-ratio, started from the lowest curl-curl mode.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh

from src.errors import InvalidArgument, NumericFailure
from src.mesh.boundary import trace_matrix
from src.mesh.grid import FaceField, GridSpec
from src.mesh.operators import (
    curl_matrix,
    div_matrix,
    edge_average_matrix,
    edge_weights,
    face_average_matrix,
    face_weights,
    leray_project,
    location_weights_pairs,
    weighted_lp,
)

logger = logging.getLogger(__name__)

SMOOTH_SUP_EXPONENT = 32.0
DATA_Q_CAP = 6.0
DATA_R_CAP = 4.0


@dataclass
class PoincareEstimate:
    value: float
    p: float
    q: float
    method: str  # "eigen" or "ascent"
    iterations: int
    converged_by: str

    def __float__(self) -> float:
        return self.value


def sobolev_exponent(p: float) -> float:
    """Largest admissible q for ||v||_q <= C ||curl v||_p (inf when p > 3)."""
    if p < 3:
        return 3.0 * p / (3.0 - p)
    return math.inf


def trace_exponent(p: float) -> float:
    if p < 3:
        return 2.0 * p / (3.0 - p)
    return math.inf


def conjugate(p: float) -> float:
    if math.isinf(p):
        return 1.0
    return p / (p - 1.0)


def data_exponents(p: float) -> tuple[float, float]:
    """Exponents (q, r) at which f and g are measured, capped for p >= 3."""
    return min(DATA_Q_CAP, sobolev_exponent(p)), min(DATA_R_CAP, trace_exponent(p))


def _check_admissible(p: float, q: float, limit: float, what: str) -> None:
    if not p > 1.0:
        raise InvalidArgument(f"p must exceed 1, got {p}")
    if not q >= 1.0:
        raise InvalidArgument(f"{what} must be at least 1, got {q}")
    if p == 3.0 and math.isinf(q):
        raise InvalidArgument(f"{what} = inf is not admissible at p = 3")
    if q > limit * (1.0 + 1e-12):
        raise InvalidArgument(f"{what} = {q} exceeds the admissible bound {limit:.6g} for p = {p}")


# ── lowest curl-curl mode ────────────────────────────────────────────────────


@lru_cache(maxsize=16)
def lowest_mode(grid: GridSpec) -> tuple[float, np.ndarray]:
    """Smallest eigenpair of curl* curl on divergence-free interior-face fields.

    Returns the eigenvalue in the face inner product and the full face vector,
    normalized to unit weighted norm.
    """
    interior = grid.interior_faces
    volume = grid.cell_volume
    curl_int = curl_matrix(grid)[:, interior]
    div_int = div_matrix(grid)[:, interior]
    stiffness = (curl_int.T @ sp.diags(edge_weights(grid)) @ curl_int) / volume

    # Push gradient modes above the whole divergence-free spectrum.
    gradient_floor = min(
        (2.0 / d * math.sin(math.pi / (2 * n))) ** 2 for d, n in zip(grid.dx, grid.cells)
    )
    gershgorin = float(np.max(np.abs(stiffness).sum(axis=1)))
    shift = 10.0 * gershgorin / gradient_floor
    operator = (stiffness + shift * (div_int.T @ div_int)).tocsc()

    size = operator.shape[0]
    k = min(3, size - 1)
    start = np.random.default_rng(0).standard_normal(size)
    values, vectors = eigsh(operator, k=k, sigma=0.0, which="LM", v0=start)
    for index in np.argsort(values):
        vector = vectors[:, index]
        divergence = np.linalg.norm(div_int @ vector) / max(np.linalg.norm(vector), 1e-300)
        if divergence <= 1e-6 * math.sqrt(gradient_floor):
            full = np.zeros(grid.n_faces)
            full[interior] = vector
            full /= math.sqrt(float(np.dot(face_weights(grid) * full, full)))
            # Deterministic sign.
            if full[np.argmax(np.abs(full))] < 0:
                full = -full
            return float(values[index]), full
    raise NumericFailure("no divergence-free eigenvector among the lowest modes")


# ── ascent on the log-ratio ──────────────────────────────────────────────────


def _radial_log_norm(
    magnitudes: np.ndarray, weights: np.ndarray, q: float
) -> tuple[float, np.ndarray]:
    """log ||m||_q and coefficients c with d(log N)/dx_j = c(j) x_j for m^2 = sum x^2."""
    top = float(np.max(magnitudes, initial=0.0))
    if top == 0.0:
        return -math.inf, np.zeros_like(magnitudes)
    scaled = magnitudes / top
    total = float(np.sum(weights * scaled**q))
    with np.errstate(divide="ignore", invalid="ignore"):
        powered = np.where(scaled > 0, scaled ** (q - 2.0), 0.0)
    coef = weights * powered / (top**2 * total)
    return math.log(top) + math.log(total) / q, coef


def _face_numerator(grid: GridSpec, q: float) -> Callable[[np.ndarray], tuple[float, np.ndarray]]:
    average = face_average_matrix(grid)
    weights = np.full(grid.n_cells, grid.cell_volume)

    def evaluate(v: np.ndarray) -> tuple[float, np.ndarray]:
        m = np.sqrt(average @ v**2)
        value, coef = _radial_log_norm(m, weights, q)
        return value, v * (average.T @ coef)

    return evaluate


def _trace_numerator(grid: GridSpec, r: float) -> Callable[[np.ndarray], tuple[float, np.ndarray]]:
    trace = trace_matrix(grid)
    pair_weights = location_weights_pairs(grid)

    def evaluate(v: np.ndarray) -> tuple[float, np.ndarray]:
        s = (trace @ v).reshape(-1)
        m, weights, owners = _surface_magnitudes(grid, s, pair_weights)
        value, coef = _radial_log_norm(m, weights, r)
        return value, trace.T @ (coef[owners] * s)

    return evaluate


def _surface_magnitudes(
    grid: GridSpec, s: np.ndarray, pair_weights: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    owners = _surface_owner(grid)
    m = np.sqrt(np.bincount(owners, weights=s**2))
    weights = np.bincount(owners, weights=pair_weights) / 2.0
    return m, weights, owners


@lru_cache(maxsize=16)
def _surface_owner(grid: GridSpec) -> np.ndarray:
    """Boundary-face number owning each surface dof."""
    owners = []
    face = 0
    for axis in range(3):
        _, n1, n2 = grid.side_shape(axis)
        for _ in (False, True):
            faces = np.arange(face, face + n1 * n2)
            owners.append(np.concatenate([faces, faces]))
            face += n1 * n2
    return np.concatenate(owners)


def _curl_denominator(grid: GridSpec, p: float) -> Callable[[np.ndarray], tuple[float, np.ndarray]]:
    curl = curl_matrix(grid)
    average = edge_average_matrix(grid)
    weights = np.full(grid.n_cells, grid.cell_volume)

    def evaluate(v: np.ndarray) -> tuple[float, np.ndarray]:
        w = curl @ v
        m = np.sqrt(average @ w**2)
        value, coef = _radial_log_norm(m, weights, p)
        return value, curl.T @ (w * (average.T @ coef))

    return evaluate


def _ascend(
    grid: GridSpec,
    numerator: Callable[[np.ndarray], tuple[float, np.ndarray]],
    denominator: Callable[[np.ndarray], tuple[float, np.ndarray]],
    report: Callable[[np.ndarray], float],
    *,
    max_iterations: int,
    tol: float,
) -> tuple[float, int, str]:
    """Maximize log N(v) - log D(curl v) over divergence-free v.

    Returns the best reported ratio seen, the iteration count and the stop reason.
    """
    weights = face_weights(grid)

    def project(x: np.ndarray) -> np.ndarray:
        return leray_project(FaceField(grid, x)).data

    def objective(x: np.ndarray) -> tuple[float, np.ndarray]:
        num, g_num = numerator(x)
        den, g_den = denominator(x)
        return num - den, project((g_num - g_den) / weights)

    def normalize(x: np.ndarray) -> np.ndarray:
        return x / math.sqrt(float(np.dot(weights * x, x)))

    _, start = lowest_mode(grid)
    v = normalize(start)
    value, direction = objective(v)
    best = report(v)
    step = 1.0
    history = [value]
    v_prev = g_prev = None

    for iteration in range(1, max_iterations + 1):
        grad_norm = math.sqrt(float(np.dot(weights * direction, direction)))
        if grad_norm <= tol:
            return best, iteration - 1, "gradient"

        if v_prev is not None and g_prev is not None:
            s = v - v_prev
            y = direction - g_prev
            sy = abs(float(np.dot(weights * s, y)))
            if sy > 0:
                step = float(np.dot(weights * s, s)) / sy
        step = min(max(step, 1e-8), 1e8)

        for _ in range(50):
            trial = normalize(project(v + step * direction))
            trial_value, trial_direction = objective(trial)
            if trial_value >= value + 1e-4 * step * grad_norm**2:
                break
            step *= 0.5
        else:
            return best, iteration, "stagnation"

        v_prev, g_prev = v, direction
        v, value, direction = trial, trial_value, trial_direction
        best = max(best, report(v))
        history.append(value)
        if len(history) > 20 and history[-1] - history[-21] <= 1e-10 * (1.0 + abs(value)):
            return best, iteration, "stagnation"

    raise NumericFailure(
        "ratio ascent did not settle", residual=grad_norm, iterations=max_iterations
    )


def _ratio_reporter(grid: GridSpec, p: float, q: float, on_boundary: bool) -> Callable[[np.ndarray], float]:
    """Exact ratio ||v||_q / ||curl v||_p, q = inf included."""
    denominator = _curl_denominator(grid, p)
    if on_boundary:
        trace = trace_matrix(grid)
        pair_weights = location_weights_pairs(grid)

        def magnitudes(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
            m, weights, _ = _surface_magnitudes(grid, trace @ v, pair_weights)
            return m, weights
    else:
        average = face_average_matrix(grid)
        cell_weights = np.full(grid.n_cells, grid.cell_volume)

        def magnitudes(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
            return np.sqrt(average @ v**2), cell_weights

    def ratio(v: np.ndarray) -> float:
        m, weights = magnitudes(v)
        return weighted_lp(m, weights, q) / math.exp(denominator(v)[0])

    return ratio


def _estimate(
    grid: GridSpec,
    p: float,
    q: float,
    on_boundary: bool,
    *,
    max_iterations: int,
    tol: float,
) -> PoincareEstimate:
    smooth_q = SMOOTH_SUP_EXPONENT if math.isinf(q) else q
    numerator = _trace_numerator(grid, smooth_q) if on_boundary else _face_numerator(grid, smooth_q)
    best, iterations, reason = _ascend(
        grid,
        numerator,
        _curl_denominator(grid, p),
        _ratio_reporter(grid, p, q, on_boundary),
        max_iterations=max_iterations,
        tol=tol,
    )
    logger.debug(
        "Ratio ascent p=%s q=%s on %s: %.6g after %d iterations (%s)",
        p, q, grid.cells, best, iterations, reason,
    )
    return PoincareEstimate(best, p, q, "ascent", iterations, reason)


def estimate_poincare(
    grid: GridSpec, p: float, q: float, *, max_iterations: int = 2000, tol: float = 1e-8
) -> PoincareEstimate:
    """Estimate sup ||v||_q / ||curl v||_p over discretely divergence-free v."""
    _check_admissible(p, q, sobolev_exponent(p), "q")
    if p == 2.0 and q == 2.0:
        eigenvalue, _ = lowest_mode(grid)
        return PoincareEstimate(1.0 / math.sqrt(eigenvalue), p, q, "eigen", 0, "eigen")
    return _estimate(grid, p, q, False, max_iterations=max_iterations, tol=tol)


def estimate_trace_constant(
    grid: GridSpec, p: float, r: float, *, max_iterations: int = 2000, tol: float = 1e-8
) -> PoincareEstimate:
    """Estimate sup ||v||_{L^r(boundary)} / ||curl v||_p over divergence-free v."""
    _check_admissible(p, r, trace_exponent(p), "r")
    return _estimate(grid, p, r, True, max_iterations=max_iterations, tol=tol)
