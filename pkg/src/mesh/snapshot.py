"""Field snapshot files.

Format: a header line ``pcurl-field v1 <kind> <nx> <ny> <nz> <ex> <ey> <ez>``
followed by one real per line in the layout order of ``GridSpec.layout()``.
Values are written with 17 significant digits so they read back exactly.
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from src.errors import InvalidArgument
from src.mesh.grid import FIELD_TYPES, GridSpec, _GridField, build_grid

logger = logging.getLogger(__name__)

MAGIC = "pcurl-field"
VERSION = "v1"


def format_header(field: _GridField) -> str:
    grid = field.grid
    sizes = " ".join(str(n) for n in grid.cells)
    extents = " ".join(repr(float(e)) for e in grid.extents)
    return f"{MAGIC} {VERSION} {field.kind} {sizes} {extents}"


def dumps_field(field: _GridField) -> str:
    lines = [format_header(field)]
    lines.extend(f"{value:.17g}" for value in field.data)
    return "\n".join(lines) + "\n"


def loads_field(text: str, grid: GridSpec | None = None) -> _GridField:
    """Parse a snapshot; when ``grid`` is given the header must match it."""
    lines = text.splitlines()
    if not lines:
        raise InvalidArgument("empty field snapshot")
    header = lines[0].split()
    if len(header) != 9 or header[0] != MAGIC:
        raise InvalidArgument(f"not a field snapshot header: {lines[0]!r}")
    if header[1] != VERSION:
        raise InvalidArgument(f"unsupported snapshot version {header[1]!r}")
    kind = header[2]
    if kind not in FIELD_TYPES:
        raise InvalidArgument(f"unknown field kind {kind!r}")
    try:
        cells = [int(v) for v in header[3:6]]
        extents = [float(v) for v in header[6:9]]
    except ValueError as e:
        raise InvalidArgument(f"malformed snapshot header: {e}") from e
    found = build_grid(extents, cells)
    if grid is not None and found != grid:
        raise InvalidArgument(f"snapshot grid {found.cells} does not match {grid.cells}")

    body = [line for line in lines[1:] if line.strip()]
    try:
        values = np.array([float(line) for line in body])
    except ValueError as e:
        raise InvalidArgument(f"malformed snapshot value: {e}") from e
    return FIELD_TYPES[kind](found, values)


def write_field(path: Path, field: _GridField) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_field(field))
    logger.debug("Wrote %s field to %s", field.kind, path)


def read_field(path: Path, grid: GridSpec | None = None) -> _GridField:
    return loads_field(Path(path).read_text(), grid)
