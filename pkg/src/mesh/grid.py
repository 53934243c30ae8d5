"""Box geometry, index layout and the field containers living on it."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Callable, ClassVar

import numpy as np

from src.errors import InvalidArgument

Vector3 = tuple[float, float, float]
VectorFn = Callable[[np.ndarray, np.ndarray, np.ndarray], tuple[Any, Any, Any]]

AXES = ("x", "y", "z")


def _others(axis: int) -> tuple[int, int]:
    """The two remaining axes in cyclic order."""
    return (axis + 1) % 3, (axis + 2) % 3


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned box [0, ex] x [0, ey] x [0, ez] split into cells."""

    extents: Vector3
    cells: tuple[int, int, int]

    @property
    def dx(self) -> Vector3:
        return tuple(e / n for e, n in zip(self.extents, self.cells))  # type: ignore[return-value]

    @property
    def cell_volume(self) -> float:
        dx, dy, dz = self.dx
        return dx * dy * dz

    @property
    def volume(self) -> float:
        return math.prod(self.extents)

    @property
    def surface_area(self) -> float:
        ex, ey, ez = self.extents
        return 2.0 * (ex * ey + ey * ez + ex * ez)

    @property
    def n_cells(self) -> int:
        return math.prod(self.cells)

    def face_shape(self, axis: int) -> tuple[int, int, int]:
        shape = list(self.cells)
        shape[axis] += 1
        return tuple(shape)  # type: ignore[return-value]

    def edge_shape(self, axis: int) -> tuple[int, int, int]:
        b, c = _others(axis)
        shape = list(self.cells)
        shape[b] -= 1
        shape[c] -= 1
        return tuple(shape)  # type: ignore[return-value]

    def side_shape(self, axis: int) -> tuple[int, int, int]:
        t1, t2 = sorted(_others(axis))
        return (2, self.cells[t1], self.cells[t2])

    @cached_property
    def face_offsets(self) -> tuple[int, int, int, int]:
        sizes = [math.prod(self.face_shape(a)) for a in range(3)]
        return (0, sizes[0], sizes[0] + sizes[1], sum(sizes))

    @cached_property
    def edge_offsets(self) -> tuple[int, int, int, int]:
        sizes = [math.prod(self.edge_shape(a)) for a in range(3)]
        return (0, sizes[0], sizes[0] + sizes[1], sum(sizes))

    @cached_property
    def side_offsets(self) -> tuple[int, ...]:
        offsets = [0]
        for axis in range(3):
            size = math.prod(self.side_shape(axis))
            offsets.append(offsets[-1] + size)
            offsets.append(offsets[-1] + size)
        return tuple(offsets)

    @property
    def n_faces(self) -> int:
        return self.face_offsets[3]

    @property
    def n_edges(self) -> int:
        return self.edge_offsets[3]

    @property
    def n_surface(self) -> int:
        return self.side_offsets[6]

    def face_index(self, axis: int) -> np.ndarray:
        """Global face numbers of one axis block, shaped like the block."""
        lo, hi = self.face_offsets[axis], self.face_offsets[axis + 1]
        return np.arange(lo, hi).reshape(self.face_shape(axis))

    def edge_index(self, axis: int) -> np.ndarray:
        lo, hi = self.edge_offsets[axis], self.edge_offsets[axis + 1]
        return np.arange(lo, hi).reshape(self.edge_shape(axis))

    def cell_index(self) -> np.ndarray:
        return np.arange(self.n_cells).reshape(self.cells)

    def side_index(self, axis: int, high: bool) -> np.ndarray:
        """Global surface numbers of one side, shaped (2, n_t1, n_t2)."""
        slot = 2 * axis + int(high)
        lo, hi = self.side_offsets[slot], self.side_offsets[slot + 1]
        return np.arange(lo, hi).reshape(self.side_shape(axis))

    @cached_property
    def boundary_face_mask(self) -> np.ndarray:
        """True on faces whose normal points out of the box."""
        mask = np.zeros(self.n_faces, dtype=bool)
        for axis in range(3):
            block = np.zeros(self.face_shape(axis), dtype=bool)
            index: list[Any] = [slice(None)] * 3
            index[axis] = 0
            block[tuple(index)] = True
            index[axis] = -1
            block[tuple(index)] = True
            lo, hi = self.face_offsets[axis], self.face_offsets[axis + 1]
            mask[lo:hi] = block.ravel()
        mask.setflags(write=False)
        return mask

    @property
    def interior_faces(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_face_mask)

    def layout(self) -> dict[str, Any]:
        """Index-order metadata written next to exported fields."""
        return {
            "extents": list(self.extents),
            "cells": list(self.cells),
            "dx": list(self.dx),
            "faces": {AXES[a]: list(self.face_shape(a)) for a in range(3)},
            "edges": {AXES[a]: list(self.edge_shape(a)) for a in range(3)},
            "sides": [f"{AXES[a]}-{side}" for a in range(3) for side in ("lo", "hi")],
            "order": "axis blocks x, y, z; C order (i, j, k) inside each block",
        }

    # ── coordinates ──────────────────────────────────────────────────────

    def _axis_coords(self, axis: int, nodes: bool, interior: bool = False) -> np.ndarray:
        d = self.dx[axis]
        n = self.cells[axis]
        if nodes:
            start = 1 if interior else 0
            stop = n if interior else n + 1
            return np.arange(start, stop) * d
        return (np.arange(n) + 0.5) * d

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        axes = [self._axis_coords(a, nodes=False) for a in range(3)]
        return tuple(np.meshgrid(*axes, indexing="ij"))  # type: ignore[return-value]

    def face_centers(self, axis: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        axes = [self._axis_coords(a, nodes=(a == axis)) for a in range(3)]
        return tuple(np.meshgrid(*axes, indexing="ij"))  # type: ignore[return-value]

    def edge_centers(self, axis: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        axes = [
            self._axis_coords(a, nodes=(a != axis), interior=(a != axis)) for a in range(3)
        ]
        return tuple(np.meshgrid(*axes, indexing="ij"))  # type: ignore[return-value]

    def side_centers(
        self, axis: int, high: bool
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Coordinates of boundary face centres on one side, shaped (n_t1, n_t2)."""
        t1, t2 = sorted(_others(axis))
        a1 = self._axis_coords(t1, nodes=False)
        a2 = self._axis_coords(t2, nodes=False)
        g1, g2 = np.meshgrid(a1, a2, indexing="ij")
        coords: list[np.ndarray] = [None, None, None]  # type: ignore[list-item]
        coords[axis] = np.full_like(g1, self.extents[axis] if high else 0.0)
        coords[t1] = g1
        coords[t2] = g2
        return tuple(coords)  # type: ignore[return-value]

    def side_area(self, axis: int) -> float:
        t1, t2 = sorted(_others(axis))
        return self.dx[t1] * self.dx[t2]


def build_grid(extents: Any, cells: Any) -> GridSpec:
    """Validate box extents and cell counts and return the grid."""
    ext = tuple(float(e) for e in extents)
    if len(ext) != 3 or not all(math.isfinite(e) and e > 0 for e in ext):
        raise InvalidArgument(f"extents must be three positive reals, got {extents!r}")
    counts = tuple(cells)
    if len(counts) != 3:
        raise InvalidArgument(f"cells must have three entries, got {cells!r}")
    for n in counts:
        if isinstance(n, bool) or int(n) != n or int(n) < 2:
            raise InvalidArgument(f"cells must be integers >= 2 per axis, got {cells!r}")
    return GridSpec(extents=ext, cells=tuple(int(n) for n in counts))  # type: ignore[arg-type]


# ── field containers ─────────────────────────────────────────────────────────


@dataclass(frozen=True, eq=False)
class _GridField:
    grid: GridSpec
    data: np.ndarray

    kind: ClassVar[str] = ""

    @classmethod
    def size_for(cls, grid: GridSpec) -> int:
        raise NotImplementedError

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=float)
        expected = self.size_for(self.grid)
        if data.size != expected:
            raise InvalidArgument(
                f"{type(self).__name__} on {self.grid.cells} needs {expected} values, "
                f"got {data.size}"
            )
        object.__setattr__(self, "data", data.reshape(expected))

    @classmethod
    def zeros(cls, grid: GridSpec):
        return cls(grid, np.zeros(cls.size_for(grid)))

    def like(self, data: np.ndarray):
        return type(self)(self.grid, data)

    def _check(self, other: Any) -> np.ndarray:
        if type(other) is not type(self):
            raise InvalidArgument(f"cannot combine {type(self).__name__} with {type(other).__name__}")
        if other.grid != self.grid:
            raise InvalidArgument("fields live on different grids")
        return other.data

    def __add__(self, other: Any):
        return self.like(self.data + self._check(other))

    def __sub__(self, other: Any):
        return self.like(self.data - self._check(other))

    def __neg__(self):
        return self.like(-self.data)

    def __mul__(self, scale: float):
        return self.like(self.data * float(scale))

    __rmul__ = __mul__

    def __truediv__(self, scale: float):
        return self.like(self.data / float(scale))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.data)))


@dataclass(frozen=True, eq=False)
class FaceField(_GridField):
    """Normal component of a vector field on every face."""

    kind: ClassVar[str] = "face"

    @classmethod
    def size_for(cls, grid: GridSpec) -> int:
        return grid.n_faces

    def block(self, axis: int) -> np.ndarray:
        lo, hi = self.grid.face_offsets[axis], self.grid.face_offsets[axis + 1]
        return self.data[lo:hi].reshape(self.grid.face_shape(axis))

    def boundary_max(self) -> float:
        values = self.data[self.grid.boundary_face_mask]
        return float(np.max(np.abs(values))) if values.size else 0.0

    def pinned(self) -> FaceField:
        """Copy with boundary-normal faces set to zero."""
        data = self.data.copy()
        data[self.grid.boundary_face_mask] = 0.0
        return FaceField(self.grid, data)


@dataclass(frozen=True, eq=False)
class EdgeField(_GridField):
    """Circulation density on interior edges (one component per edge)."""

    kind: ClassVar[str] = "edge"

    @classmethod
    def size_for(cls, grid: GridSpec) -> int:
        return grid.n_edges

    def block(self, axis: int) -> np.ndarray:
        lo, hi = self.grid.edge_offsets[axis], self.grid.edge_offsets[axis + 1]
        return self.data[lo:hi].reshape(self.grid.edge_shape(axis))


@dataclass(frozen=True, eq=False)
class CellField(_GridField):
    kind: ClassVar[str] = "cell"

    @classmethod
    def size_for(cls, grid: GridSpec) -> int:
        return grid.n_cells

    @classmethod
    def constant(cls, grid: GridSpec, value: float) -> CellField:
        return cls(grid, np.full(grid.n_cells, float(value)))


@dataclass(frozen=True, eq=False)
class SurfaceField(_GridField):
    """Two tangential components per boundary face."""

    kind: ClassVar[str] = "surface"

    @classmethod
    def size_for(cls, grid: GridSpec) -> int:
        return grid.n_surface

    def side(self, axis: int, high: bool) -> np.ndarray:
        slot = 2 * axis + int(high)
        lo, hi = self.grid.side_offsets[slot], self.grid.side_offsets[slot + 1]
        return self.data[lo:hi].reshape(self.grid.side_shape(axis))


FIELD_TYPES: dict[str, type[_GridField]] = {
    cls.kind: cls for cls in (FaceField, EdgeField, CellField, SurfaceField)
}


# ── sampling of analytic fields ──────────────────────────────────────────────


def sample_faces(grid: GridSpec, fn: VectorFn) -> FaceField:
    """Normal components of the vector field ``fn(x, y, z)`` at face centres."""
    blocks = []
    for axis in range(3):
        x, y, z = grid.face_centers(axis)
        value = fn(x, y, z)[axis]
        blocks.append(np.broadcast_to(np.asarray(value, dtype=float), x.shape).ravel())
    return FaceField(grid, np.concatenate(blocks))


def sample_edges(grid: GridSpec, fn: VectorFn) -> EdgeField:
    blocks = []
    for axis in range(3):
        x, y, z = grid.edge_centers(axis)
        value = fn(x, y, z)[axis]
        blocks.append(np.broadcast_to(np.asarray(value, dtype=float), x.shape).ravel())
    return EdgeField(grid, np.concatenate(blocks))


def sample_cells(grid: GridSpec, fn: Callable[..., Any]) -> CellField:
    x, y, z = grid.cell_centers()
    value = np.broadcast_to(np.asarray(fn(x, y, z), dtype=float), x.shape)
    return CellField(grid, value.ravel())


def sample_surface(grid: GridSpec, fn: VectorFn) -> SurfaceField:
    """Tangential components (t1 < t2) of ``fn`` at boundary face centres."""
    parts = []
    for axis in range(3):
        t1, t2 = sorted(_others(axis))
        for high in (False, True):
            x, y, z = grid.side_centers(axis, high)
            value = fn(x, y, z)
            side = np.stack(
                [
                    np.broadcast_to(np.asarray(value[t1], dtype=float), x.shape),
                    np.broadcast_to(np.asarray(value[t2], dtype=float), x.shape),
                ]
            )
            parts.append(side.ravel())
    return SurfaceField(grid, np.concatenate(parts))
