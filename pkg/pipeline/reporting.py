"""Report writers: JSON summaries, CSV fields and sample logs, console tables."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from rich.console import Console
from rich.table import Table

from discretization.field import ScalarField

logger = logging.getLogger(__name__)


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


def dumps(report: Any) -> str:
    """Sorted keys and repr floats: identical reports give identical text."""
    return json.dumps(report, sort_keys=True, indent=2, default=_jsonable) + "\n"


def write_json(report: Any, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(report), encoding="utf-8")
    logger.info("Wrote %s", path)
    return path


def write_fields(fields: dict[str, ScalarField], out_dir: Path) -> list[str]:
    """One CSV per field, named <name>.csv; returns the file names."""
    out_dir.mkdir(parents=True, exist_ok=True)
    names = []
    for name, values in fields.items():
        path = values.write_csv(out_dir / f"{name}.csv", name=name)
        names.append(path.name)
    logger.info("Wrote %d field files to %s", len(names), out_dir)
    return names


def write_samples(samples: pd.DataFrame, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    samples.to_csv(path, index=False, float_format="%.17g")
    logger.info("Wrote %d samples to %s", len(samples), path)
    return path


def sweep_frame(records: list[dict]) -> pd.DataFrame:
    """Flat per-sigma summary of sweep records."""
    rows = []
    for record in records:
        asymptotic = record.get("asymptotic") or {}
        row = {
            "sigma": record.get("sigma"),
            "status": record.get("status"),
            "k_star": asymptotic.get("k_star"),
            "log_probability": asymptotic.get("log_probability"),
            "probability": asymptotic.get("probability"),
        }
        for method, estimate in sorted((record.get("mc") or {}).items()):
            row[f"{method}_mean"] = estimate["mean"]
            row[f"{method}_std_error"] = estimate["std_error"]
        for method, ratio in sorted((record.get("ratio") or {}).items()):
            row[f"{method}_ratio"] = ratio
        rows.append(row)
    return pd.DataFrame(rows)


def print_summary(title: str, rows: dict[str, Any], console: Console | None = None):
    """Key/value table on stderr; silent below INFO."""
    if not logger.isEnabledFor(logging.INFO):
        return
    console = console or Console(stderr=True)
    table = Table(title=title, show_header=False)
    table.add_column("quantity", style="cyan")
    table.add_column("value", justify="right")
    for key, value in rows.items():
        table.add_row(key, f"{value:.6g}" if isinstance(value, float) else str(value))
    console.print(table)
