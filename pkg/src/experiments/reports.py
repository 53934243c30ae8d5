"""Deterministic report files: report.json, CSV tables, and run.json provenance."""

from __future__ import annotations

import csv
import json
import logging
import platform
from importlib import metadata
from pathlib import Path
from typing import Any, Iterable, Sequence

from pydantic import BaseModel

from src.evolution.export import INDEX_COLUMNS

logger = logging.getLogger(__name__)

# Header of every CSV each kind writes; --help prints this table.
CSV_SCHEMAS: dict[str, dict[str, tuple[str, ...]]] = {
    "evolve": {"index.csv": INDEX_COLUMNS},
    "stationary": {
        "stationary.csv": ("quantity", "value"),
    },
    "decay": {
        "decay.csv": ("step", "t", "phi", "bound", "xi", "zeta"),
    },
    "plimit": {
        "plimit.csv": ("n", "max_curl", "endpoint_max_curl", "ln_norm", "l4_norm", "holder_trend_4", "cauchy_distance"),
    },
    "penalty-sweep": {
        "penalty.csv": (
            "eps", "violation", "violation_power", "penalty_mass", "time_derivative", "linf_l2",
            "curl_lp", "measure_a", "measure_b", "measure_c", "measure_d", "partition_defect",
        ),
    },
    "cdep": {
        "cdep.csv": ("delta", "lhs", "max_l2_sq", "curl_gap", "rhs", "ratio"),
    },
    "verify": {
        "structure.csv": ("law", "p", "sample_count", "coercivity_min", "growth_max", "monotonicity_min", "passed"),
    },
    "oracle-compare": {
        "oracle.csv": ("step", "t", "production_l2", "oracle_l2", "relative_diff"),
    },
}


def schema_help() -> str:
    lines = ["CSV schemas per kind:"]
    for kind, files in CSV_SCHEMAS.items():
        for name, columns in files.items():
            lines.append(f"  {kind:15s} {name:15s} {','.join(columns)}")
    return "\n".join(lines)


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: Path, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            if len(row) != len(columns):
                raise ValueError(f"{path.name}: row of {len(row)} values for {len(columns)} columns")
            writer.writerow([_cell(v) for v in row])
            count += 1
    logger.debug("Wrote %d rows to %s", count, path)
    return path


def _plain(value: Any) -> Any:
    if isinstance(value, BaseModel):
        return value.model_dump(mode="json")
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if hasattr(value, "item"):
        return value.item()
    return value


def write_json(path: Path, payload: dict[str, Any]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_plain(payload), indent=2, sort_keys=True) + "\n")
    return path


def _version(package: str) -> str:
    try:
        return metadata.version(package)
    except metadata.PackageNotFoundError:
        return "unknown"


def provenance(config_echo: dict[str, Any], seed: int, timings: dict[str, float]) -> dict[str, Any]:
    return {
        "config": config_echo,
        "seed": seed,
        "timings_s": timings,
        "versions": {
            "python": platform.python_version(),
            "pcurl-lab": _version("pcurl-lab"),
            "numpy": _version("numpy"),
            "scipy": _version("scipy"),
            "matplotlib": _version("matplotlib"),
            "pydantic": _version("pydantic"),
        },
    }
