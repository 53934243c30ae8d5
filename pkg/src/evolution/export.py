"""Write a trajectory as per-node snapshot files plus an index table."""

from __future__ import annotations

import csv
import logging
from pathlib import Path

from src.evolution.stepper import Trajectory
from src.mesh.snapshot import write_field

logger = logging.getLogger(__name__)

INDEX_COLUMNS = ("step", "t", "energy", "inner_iters", "pg_residual", "l2_norm", "curl_lp_norm")


def snapshot_name(k: int) -> str:
    return f"h_{k:05d}.field"


def export_trajectory(trajectory: Trajectory, directory: Path, snapshots: bool = True) -> Path:
    """Write h_<k>.field per node (when ``snapshots``) and index.csv; returns the index path."""
    directory.mkdir(parents=True, exist_ok=True)
    l2 = trajectory.l2_norms()
    curl_lp = trajectory.curl_norms()
    index_path = directory / "index.csv"
    with open(index_path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(INDEX_COLUMNS)
        for k, (t, h) in enumerate(zip(trajectory.times, trajectory.states)):
            diag = trajectory.diagnostics[k]
            writer.writerow(
                [
                    k,
                    repr(float(t)),
                    repr(float(trajectory.energies[k])),
                    0 if diag is None else diag.iterations,
                    repr(0.0 if diag is None else float(diag.pg_residual)),
                    repr(float(l2[k])),
                    repr(float(curl_lp[k])),
                ]
            )
            if snapshots:
                write_field(directory / snapshot_name(k), h)
    logger.info("Wrote %d nodes to %s", len(trajectory), directory)
    return index_path
