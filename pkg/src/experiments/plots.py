"""Static SVG plots; fixed hash salt and no date so reruns give identical files."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

logger = logging.getLogger(__name__)

plt.rcParams["svg.hashsalt"] = "pcurl-lab"
plt.rcParams["svg.fonttype"] = "none"

MAX_CURVES = 2


def plot_curves(
    path: Path,
    x: Sequence[float],
    curves: dict[str, Sequence[float | None]],
    *,
    title: str,
    xlabel: str,
    ylabel: str,
    logx: bool = False,
    logy: bool = False,
) -> Path | None:
    """One to two curves on shared axes; None values and non-positive log values are dropped."""
    if not 0 < len(curves) <= MAX_CURVES:
        raise ValueError(f"plots hold 1 to {MAX_CURVES} curves, got {len(curves)}")
    xs = np.asarray(x, dtype=float)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    drawn = 0
    for label, values in curves.items():
        ys = np.array([np.nan if v is None else float(v) for v in values])
        keep = np.isfinite(ys) & np.isfinite(xs)
        if logy:
            keep &= ys > 0
        if logx:
            keep &= xs > 0
        if np.any(keep):
            ax.plot(xs[keep], ys[keep], marker="o", markersize=3, label=label)
            drawn += 1
    if drawn == 0:
        plt.close(fig)
        logger.warning("Nothing to plot for %s", path.name)
        return None
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend()
    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path
