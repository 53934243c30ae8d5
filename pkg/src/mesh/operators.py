"""Sparse staggered-grid operators, mesh weights, norms and the Leray projection.

Operators are assembled once per grid and cached; the public functions are
pure maps between field containers.
"""

from __future__ import annotations

import logging
import math
from functools import lru_cache
from typing import Any

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from src.errors import InvalidArgument, NumericFailure
from src.mesh.grid import (
    CellField,
    EdgeField,
    FaceField,
    GridSpec,
    SurfaceField,
    _GridField,
    _others,
)

logger = logging.getLogger(__name__)

_CACHE_SIZE = 32


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


# ── assembly ─────────────────────────────────────────────────────────────────


@lru_cache(maxsize=_CACHE_SIZE)
def curl_matrix(grid: GridSpec) -> sp.csr_matrix:
    """Edges x faces. curl_a = d_b h_c - d_c h_b with (a, b, c) cyclic.

    Edges are interior, so every face read is an interior face.
    """
    rows, cols, vals = [], [], []
    d = grid.dx
    for a in range(3):
        b, c = _others(a)
        edges = grid.edge_index(a)
        node = list(np.indices(edges.shape))
        node[b] = node[b] + 1
        node[c] = node[c] + 1
        for shift, sign in ((0, 1.0), (-1, -1.0)):
            face_c = list(node)
            face_c[b] = node[b] + shift
            rows.append(edges.ravel())
            cols.append(grid.face_index(c)[tuple(face_c)].ravel())
            vals.append(np.full(edges.size, sign / d[b]))

            face_b = list(node)
            face_b[c] = node[c] + shift
            rows.append(edges.ravel())
            cols.append(grid.face_index(b)[tuple(face_b)].ravel())
            vals.append(np.full(edges.size, -sign / d[c]))
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(grid.n_edges, grid.n_faces),
    )


@lru_cache(maxsize=_CACHE_SIZE)
def div_matrix(grid: GridSpec) -> sp.csr_matrix:
    """Cells x faces flux balance (boundary faces included)."""
    rows, cols, vals = [], [], []
    cells = grid.cell_index()
    for a in range(3):
        idx = list(np.indices(grid.cells))
        faces = grid.face_index(a)
        for shift, sign in ((1, 1.0), (0, -1.0)):
            at = list(idx)
            at[a] = idx[a] + shift
            rows.append(cells.ravel())
            cols.append(faces[tuple(at)].ravel())
            vals.append(np.full(grid.n_cells, sign / grid.dx[a]))
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(grid.n_cells, grid.n_faces),
    )


@lru_cache(maxsize=_CACHE_SIZE)
def grad_matrix(grid: GridSpec) -> sp.csr_matrix:
    """Faces x cells; the negative transpose of div on interior faces, zero on the boundary."""
    keep = sp.diags((~grid.boundary_face_mask).astype(float))
    return sp.csr_matrix(-(keep @ div_matrix(grid).T))


@lru_cache(maxsize=_CACHE_SIZE)
def face_weights(grid: GridSpec) -> np.ndarray:
    weights = np.full(grid.n_faces, grid.cell_volume)
    weights[grid.boundary_face_mask] *= 0.5
    return _frozen(weights)


@lru_cache(maxsize=_CACHE_SIZE)
def face_average_matrix(grid: GridSpec) -> sp.csr_matrix:
    """Cells x faces; (F @ h**2) is the squared co-located magnitude of h."""
    rows, cols = [], []
    cells = grid.cell_index()
    for a in range(3):
        idx = list(np.indices(grid.cells))
        faces = grid.face_index(a)
        for shift in (0, 1):
            at = list(idx)
            at[a] = idx[a] + shift
            rows.append(cells.ravel())
            cols.append(faces[tuple(at)].ravel())
    rows_a = np.concatenate(rows)
    return sp.csr_matrix(
        (np.full(rows_a.size, 0.5), (rows_a, np.concatenate(cols))),
        shape=(grid.n_cells, grid.n_faces),
    )


@lru_cache(maxsize=_CACHE_SIZE)
def edge_average_matrix(grid: GridSpec) -> sp.csr_matrix:
    """Cells x edges; each component is the mean of its existing edges around the cell."""
    rows, cols, vals = [], [], []
    cells = grid.cell_index()
    for a in range(3):
        b, c = _others(a)
        edges = grid.edge_index(a)
        idx = list(np.indices(grid.cells))
        picks = []
        for ob in (0, 1):
            for oc in (0, 1):
                nb = idx[b] + ob
                nc = idx[c] + oc
                valid = (nb >= 1) & (nb < grid.cells[b]) & (nc >= 1) & (nc < grid.cells[c])
                at = list(idx)
                at[b] = np.clip(nb - 1, 0, edges.shape[b] - 1)
                at[c] = np.clip(nc - 1, 0, edges.shape[c] - 1)
                picks.append((valid, edges[tuple(at)]))
        count = sum(valid.astype(int) for valid, _ in picks)
        for valid, edge in picks:
            rows.append(cells[valid])
            cols.append(edge[valid])
            vals.append(1.0 / count[valid])
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(grid.n_cells, grid.n_edges),
    )


@lru_cache(maxsize=_CACHE_SIZE)
def edge_weights(grid: GridSpec) -> np.ndarray:
    """Edge weights V * sum_c mu_{c,e}; they make sum_e w_e x_e^2 the co-located L2 norm."""
    counts = np.asarray(edge_average_matrix(grid).sum(axis=0)).ravel()
    return _frozen(grid.cell_volume * counts)


@lru_cache(maxsize=_CACHE_SIZE)
def _poisson_factor(grid: GridSpec):
    """LU factor of the zero-mean bordered Neumann Laplacian."""
    laplacian = div_matrix(grid) @ grad_matrix(grid)
    ones = sp.csr_matrix(np.ones((grid.n_cells, 1)))
    bordered = sp.bmat([[laplacian, ones], [ones.T, None]], format="csc")
    logger.debug("Factorizing Poisson system for grid %s", grid.cells)
    return splu(bordered)


# ── field operations ─────────────────────────────────────────────────────────


def _expect(field: Any, cls: type[_GridField], op: str) -> None:
    if not isinstance(field, cls):
        raise InvalidArgument(f"{op} expects a {cls.__name__}, got {type(field).__name__}")


def curl(h: FaceField) -> EdgeField:
    _expect(h, FaceField, "curl")
    return EdgeField(h.grid, curl_matrix(h.grid) @ h.data)


def curl_adjoint(w: EdgeField) -> FaceField:
    """Adjoint of curl in the weighted inner products; lands on interior faces only."""
    _expect(w, EdgeField, "curl_adjoint")
    grid = w.grid
    data = curl_matrix(grid).T @ (edge_weights(grid) * w.data)
    return FaceField(grid, data / face_weights(grid))


def div(h: FaceField) -> CellField:
    _expect(h, FaceField, "div")
    return CellField(h.grid, div_matrix(h.grid) @ h.data)


def grad(phi: CellField) -> FaceField:
    _expect(phi, CellField, "grad")
    return FaceField(phi.grid, grad_matrix(phi.grid) @ phi.data)


def leray_project(h: FaceField) -> FaceField:
    """Orthogonal projection onto divergence-free fields with zero normal trace."""
    _expect(h, FaceField, "leray_project")
    grid = h.grid
    pinned = h.pinned().data
    rhs_cells = div_matrix(grid) @ pinned
    rhs = np.append(rhs_cells, 0.0)
    solution = _poisson_factor(grid).solve(rhs)
    result = pinned - grad_matrix(grid) @ solution[:-1]

    residual = float(np.max(np.abs(div_matrix(grid) @ result)))
    scale = float(np.max(np.abs(rhs_cells), initial=0.0)) + float(
        np.max(np.abs(pinned), initial=0.0)
    ) / min(grid.dx)
    if residual > 1e-9 * scale:
        raise NumericFailure("Poisson solve in leray_project did not converge", residual=residual)
    return FaceField(grid, result)


def magnitude(field: _GridField) -> np.ndarray:
    """Co-located magnitudes: per cell for face/edge/cell fields, per boundary face for surfaces."""
    grid = field.grid
    if isinstance(field, FaceField):
        return np.sqrt(face_average_matrix(grid) @ field.data**2)
    if isinstance(field, EdgeField):
        return np.sqrt(edge_average_matrix(grid) @ field.data**2)
    if isinstance(field, CellField):
        return np.abs(field.data)
    if isinstance(field, SurfaceField):
        parts = []
        for axis in range(3):
            for high in (False, True):
                side = field.side(axis, high)
                parts.append(np.sqrt(side[0] ** 2 + side[1] ** 2).ravel())
        return np.concatenate(parts)
    raise InvalidArgument(f"no magnitude for {type(field).__name__}")


def location_weights(field: _GridField) -> np.ndarray:
    """Quadrature weights matching ``magnitude(field)``."""
    grid = field.grid
    if isinstance(field, SurfaceField):
        parts = []
        for axis in range(3):
            _, n1, n2 = grid.side_shape(axis)
            parts.extend(np.full(n1 * n2, grid.side_area(axis)) for _ in (False, True))
        return np.concatenate(parts)
    return np.full(grid.n_cells, grid.cell_volume)


def weighted_lp(values: np.ndarray, weights: np.ndarray, p: float) -> float:
    """(sum w |v|^p)^(1/p), scaled by the maximum to stay finite for large p."""
    p = _check_exponent(p)
    values = np.abs(np.asarray(values, dtype=float))
    top = float(np.max(values, initial=0.0))
    if top == 0.0:
        return 0.0
    if math.isinf(p):
        return top
    return top * float(np.sum(weights * (values / top) ** p)) ** (1.0 / p)


def _check_exponent(p: float) -> float:
    p = float(p)
    if math.isnan(p) or p < 1.0:
        raise InvalidArgument(f"norm exponent must lie in [1, inf], got {p}")
    return p


def lp_norm(field: _GridField, p: float) -> float:
    """Mesh-weighted L^p norm of the co-located magnitudes; p = inf gives the max."""
    return weighted_lp(magnitude(field), location_weights(field), p)


def inner(a: _GridField, b: _GridField) -> float:
    """Weighted inner product for face and edge fields; cell fields use the cell volume."""
    data_b = a._check(b)
    grid = a.grid
    if isinstance(a, FaceField):
        return float(np.dot(face_weights(grid) * a.data, data_b))
    if isinstance(a, EdgeField):
        return float(np.dot(edge_weights(grid) * a.data, data_b))
    if isinstance(a, CellField):
        return float(grid.cell_volume * np.dot(a.data, data_b))
    return float(np.dot(location_weights_pairs(grid) * a.data, data_b))


def location_weights_pairs(grid: GridSpec) -> np.ndarray:
    """Area weight for every surface degree of freedom (both tangential components)."""
    parts = []
    for axis in range(3):
        size = math.prod(grid.side_shape(axis))
        for _ in (False, True):
            parts.append(np.full(size, grid.side_area(axis)))
    return np.concatenate(parts)


def l2_norm(field: _GridField) -> float:
    return math.sqrt(max(inner(field, field), 0.0))


def random_divfree(grid: GridSpec, rng: np.random.Generator) -> FaceField:
    """A random admissible field, exactly divergence-free."""
    return curl_adjoint(EdgeField(grid, rng.standard_normal(grid.n_edges)))
