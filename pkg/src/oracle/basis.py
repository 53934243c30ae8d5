"""Dense orthonormal basis of the admissible (divergence-free, zero normal trace) face fields."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import null_space

from src.errors import InvalidArgument
from src.mesh.grid import FaceField, GridSpec
from src.mesh.operators import div_matrix, face_weights

logger = logging.getLogger(__name__)

MAX_FACES = 4000


@dataclass(frozen=True, eq=False)
class DivFreeBasis:
    """Columns span the admissible face fields and satisfy B^T W B = I."""

    grid: GridSpec
    matrix: np.ndarray  # faces x dimension

    @property
    def dimension(self) -> int:
        return self.matrix.shape[1]

    def lift(self, coefficients: np.ndarray) -> FaceField:
        return FaceField(self.grid, self.matrix @ np.asarray(coefficients, dtype=float))

    def coefficients(self, h: FaceField) -> np.ndarray:
        if h.grid != self.grid:
            raise InvalidArgument("field lives on a different grid than the basis")
        return self.matrix.T @ (face_weights(self.grid) * h.data)

    def project(self, h: FaceField) -> FaceField:
        return self.lift(self.coefficients(h))


@lru_cache(maxsize=8)
def divfree_basis(grid: GridSpec) -> DivFreeBasis:
    if grid.n_faces > MAX_FACES:
        raise InvalidArgument(
            f"dense basis is limited to {MAX_FACES} faces, grid has {grid.n_faces}"
        )
    interior = grid.interior_faces
    restricted = div_matrix(grid)[:, interior].toarray()
    kernel = null_space(restricted)
    # interior faces all carry the weight V, so scaling keeps W-orthonormality
    matrix = np.zeros((grid.n_faces, kernel.shape[1]))
    matrix[interior] = kernel / math.sqrt(grid.cell_volume)
    matrix.setflags(write=False)
    logger.debug("Dense basis for grid %s: dimension %d", grid.cells, kernel.shape[1])
    return DivFreeBasis(grid, matrix)
