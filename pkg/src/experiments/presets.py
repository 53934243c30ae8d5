"""Analytic data presets and their time profiles; field files override presets."""

from __future__ import annotations

import logging
import math
from pathlib import Path

import numpy as np

from src.errors import InvalidArgument
from src.evolution.data import TimeSeriesData, feasibility_gap
from src.experiments.config import DataSection, Preset, TimeProfile
from src.mesh.grid import CellField, EdgeField, FaceField, GridSpec, SurfaceField
from src.mesh.operators import curl, curl_adjoint, l2_norm, magnitude, random_divfree
from src.mesh.snapshot import read_field

logger = logging.getLogger(__name__)


def time_factor(profile: TimeProfile, t: float) -> float:
    if profile is TimeProfile.STEADY:
        return 1.0
    if profile is TimeProfile.DECAYING:
        return math.exp(-t)
    return 1.0 + math.exp(-t)


def limit_factor(profile: TimeProfile) -> float:
    """The t -> infinity value of a time profile."""
    return 0.0 if profile is TimeProfile.DECAYING else 1.0


def _vector_potential(grid: GridSpec) -> EdgeField:
    """A single smooth mode: sin-bumps on the z-edges, zero elsewhere."""
    parts = []
    for axis in range(3):
        x, y, z = grid.edge_centers(axis)
        if axis == 2:
            ex, ey, _ = grid.extents
            parts.append((np.sin(math.pi * x / ex) * np.sin(math.pi * y / ey)).ravel())
        else:
            parts.append(np.zeros(x.size))
    return EdgeField(grid, np.concatenate(parts))


def _normalized(h: FaceField, amplitude: float) -> FaceField:
    size = l2_norm(h)
    return h * (amplitude / size) if size > 0 else h


def face_preset(grid: GridSpec, preset: Preset, amplitude: float, rng: np.random.Generator) -> FaceField:
    if preset is Preset.ZERO or amplitude == 0:
        return FaceField.zeros(grid)
    if preset is Preset.UNIFORM:
        data = np.zeros(grid.n_faces)
        lo, hi = grid.face_offsets[0], grid.face_offsets[1]
        data[lo:hi] = amplitude
        return FaceField(grid, data)
    if preset is Preset.MODE:
        return _normalized(curl_adjoint(_vector_potential(grid)), amplitude)
    return _normalized(random_divfree(grid, rng), amplitude)


def surface_preset(
    grid: GridSpec, preset: Preset, amplitude: float, rng: np.random.Generator
) -> SurfaceField:
    if preset is Preset.ZERO or amplitude == 0:
        return SurfaceField.zeros(grid)
    if preset is Preset.UNIFORM:
        return SurfaceField(grid, np.full(grid.n_surface, amplitude))
    if preset is Preset.RANDOM:
        return SurfaceField(grid, amplitude * rng.standard_normal(grid.n_surface))
    parts = []
    for axis in range(3):
        for high in (False, True):
            coords = grid.side_centers(axis, high)
            t1, t2 = sorted(a for a in range(3) if a != axis)
            bump = np.sin(math.pi * coords[t1] / grid.extents[t1]) * np.sin(
                math.pi * coords[t2] / grid.extents[t2]
            )
            parts.append(np.stack([bump, -bump]).ravel())
    return SurfaceField(grid, amplitude * np.concatenate(parts))


def psi_preset(grid: GridSpec, data: DataSection) -> CellField:
    """The limit profile Psi_inf: a level, optionally modulated by a single mode."""
    level = data.psi_level
    if data.psi is Preset.MODE:
        x, y, z = grid.cell_centers()
        ex, ey, ez = grid.extents
        wave = np.cos(math.pi * x / ex) * np.cos(math.pi * y / ey) * np.cos(math.pi * z / ez)
        return CellField(grid, (level * (1.0 + data.psi_amplitude * wave)).ravel())
    if data.psi is Preset.RANDOM:
        raise InvalidArgument("Psi has no random preset; use uniform, mode or psi_file")
    return CellField.constant(grid, level)


def _load(path: Path, grid: GridSpec, cls: type, base: Path | None):
    if base is not None and not path.is_absolute():
        path = base / path
    field = read_field(path, grid)
    if not isinstance(field, cls):
        raise InvalidArgument(f"{path} holds a {field.kind} field, expected {cls.kind}")
    return field


def fit_under(h0: FaceField, psi: CellField) -> FaceField:
    """Scale h0 down until |curl h0| <= Psi."""
    if feasibility_gap(h0, psi) <= 0:
        return h0
    m = magnitude(curl(h0))
    ratio = float(np.min(np.where(m > 0, psi.data / np.maximum(m, 1e-300), np.inf)))
    logger.warning("Scaling h0 by %.4g to satisfy the constraint at t = 0", ratio)
    return h0 * (ratio * (1.0 - 1e-9))


def build_data(
    grid: GridSpec,
    data: DataSection,
    seed: int,
    *,
    t_final: float | None = None,
    base: Path | None = None,
) -> tuple[TimeSeriesData, dict[str, object]]:
    """Time series on a uniform grid of ``data.steps`` steps plus the limit data."""
    rng = np.random.default_rng(seed)
    t_final = data.t_final if t_final is None else t_final
    t_grid = np.linspace(0.0, t_final, data.steps + 1)

    if data.f_file is not None:
        f_inf = _load(data.f_file, grid, FaceField, base)
    else:
        f_inf = face_preset(grid, data.f, data.f_amplitude, rng)
    if data.g_file is not None:
        g_inf = _load(data.g_file, grid, SurfaceField, base)
    else:
        g_inf = surface_preset(grid, data.g, data.g_amplitude, rng)
    if data.h0_file is not None:
        h0 = _load(data.h0_file, grid, FaceField, base)
    elif data.h0 is Preset.UNIFORM:
        raise InvalidArgument("h0 has no uniform preset; a constant field is not admissible")
    else:
        h0 = face_preset(grid, data.h0, data.h0_amplitude, rng)

    psi_series = None
    psi_inf = None
    if data.constrained:
        if data.psi_file is not None:
            psi_inf = _load(data.psi_file, grid, CellField, base)
        else:
            psi_inf = psi_preset(grid, data)
        psi_series = [psi_inf * time_factor(data.psi_time, t) for t in t_grid]
        h0 = fit_under(h0, psi_series[0])

    f = [f_inf * time_factor(data.f_time, t) for t in t_grid]
    g = [g_inf * time_factor(data.g_time, t) for t in t_grid]
    series = TimeSeriesData(tuple(t_grid), f, g, h0, psi_series)
    limits = {
        "f_inf": f_inf * limit_factor(data.f_time),
        "g_inf": g_inf * limit_factor(data.g_time),
        "psi_inf": psi_inf,
    }
    return series, limits
