"""Tangential boundary trace and the boundary pairing with surface data."""

from __future__ import annotations

from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from src.errors import InvalidArgument
from src.mesh.grid import FaceField, GridSpec, SurfaceField, _others
from src.mesh.operators import face_weights, location_weights_pairs

# One-sided linear extrapolation from the first two cell layers to the wall.
_EXTRAPOLATION = ((0, 1.5), (1, -0.5))


@lru_cache(maxsize=32)
def trace_matrix(grid: GridSpec) -> sp.csr_matrix:
    """Surface dofs x faces.

    The tangential component is averaged to cell centres along its own axis,
    then extrapolated along the normal to the boundary face centre.
    """
    rows, cols, vals = [], [], []
    for axis in range(3):
        t1, t2 = sorted(_others(axis))
        n = grid.cells[axis]
        i1, i2 = np.meshgrid(np.arange(grid.cells[t1]), np.arange(grid.cells[t2]), indexing="ij")
        for high in (False, True):
            side = grid.side_index(axis, high)
            for slot, t in enumerate((t1, t2)):
                faces = grid.face_index(t)
                for layer, weight in _EXTRAPOLATION:
                    at: list[np.ndarray] = [None, None, None]  # type: ignore[list-item]
                    at[axis] = np.full_like(i1, n - 1 - layer if high else layer)
                    at[t1] = i1
                    at[t2] = i2
                    for node in (0, 1):
                        shifted = list(at)
                        shifted[t] = at[t] + node
                        rows.append(side[slot].ravel())
                        cols.append(faces[tuple(shifted)].ravel())
                        vals.append(np.full(i1.size, 0.5 * weight))
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(grid.n_surface, grid.n_faces),
    )


def _check_pair(g: SurfaceField, h: FaceField) -> None:
    if not isinstance(g, SurfaceField) or not isinstance(h, FaceField):
        raise InvalidArgument("boundary pairing needs a SurfaceField and a FaceField")
    if g.grid != h.grid:
        raise InvalidArgument("boundary pairing fields live on different grids")


def boundary_trace(h: FaceField) -> SurfaceField:
    if not isinstance(h, FaceField):
        raise InvalidArgument("boundary_trace expects a FaceField")
    return SurfaceField(h.grid, trace_matrix(h.grid) @ h.data)


def boundary_pair(g: SurfaceField, h: FaceField) -> float:
    """Midpoint quadrature of g . h over the six sides."""
    _check_pair(g, h)
    weighted = location_weights_pairs(g.grid) * g.data
    return float(np.dot(weighted, trace_matrix(g.grid) @ h.data))


def boundary_load(g: SurfaceField) -> FaceField:
    """Face field b with <b, h>_faces = boundary_pair(g, h) for every h."""
    if not isinstance(g, SurfaceField):
        raise InvalidArgument("boundary_load expects a SurfaceField")
    grid = g.grid
    weighted = location_weights_pairs(grid) * g.data
    return FaceField(grid, (trace_matrix(grid).T @ weighted) / face_weights(grid))
