"""Shared fixtures: small grids, seeded generators and a marker for long runs."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
import pytest

from src.mesh.grid import GridSpec, build_grid


def _slow_enabled() -> bool:
    return os.getenv("PCURL_RUN_SLOW", "") not in ("", "0")


# ── skip marker ──────────────────────────────────────────────────────────────

skip_unless_slow = pytest.mark.skipif(
    not _slow_enabled(),
    reason="Long-running solver check (set PCURL_RUN_SLOW=1 to enable)",
)


# ── fixtures ─────────────────────────────────────────────────────────────────


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def tiny_grid() -> GridSpec:
    """3x3x3 cells on the unit cube; small enough for dense reference solvers."""
    return build_grid([1, 1, 1], [3, 3, 3])


@pytest.fixture(scope="session")
def skewed_grid() -> GridSpec:
    """Anisotropic box with unequal cell counts, to catch axis mix-ups."""
    return build_grid([1.0, 2.0, 0.5], [4, 3, 2])


@pytest.fixture(scope="session")
def small_grid() -> GridSpec:
    return build_grid([1, 1, 1], [5, 5, 5])


@pytest.fixture
def repo_root() -> Path:
    return Path(__file__).resolve().parent.parent
