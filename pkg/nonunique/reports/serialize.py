"""
JSON reports and CSV dumps.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, is_dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel

SIGNIFICANT_DIGITS = 17


def _round(value: float) -> float:
    if not math.isfinite(value) or value == 0.0:
        return value
    return float(f"{value:.{SIGNIFICANT_DIGITS}g}")


def to_primitive(value: Any) -> Any:
    """Convert report values (pydantic models, dataclasses, numpy) into JSON primitives."""
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, BaseModel):
        doc = to_primitive(value.model_dump())
        if hasattr(value, "passed"):
            doc["pass"] = bool(value.passed)
        return doc
    if is_dataclass(value) and not isinstance(value, type):
        return to_primitive(asdict(value))
    if isinstance(value, dict):
        return {str(k): to_primitive(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_primitive(item) for item in value]
    if isinstance(value, np.ndarray):
        return to_primitive(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if not math.isfinite(value):
            return str(value)
        return _round(value)
    if isinstance(value, (str, type(None))):
        return value
    return str(value)


def emit_report(
    result: Any = None,
    config: Optional[dict[str, Any]] = None,
    timings: Optional[dict[str, float]] = None,
    seed: Optional[int] = None,
) -> str:
    """Stable-key JSON with the config echo, the result and optional timings."""
    doc: dict[str, Any] = {"config": to_primitive(config or {})}
    if seed is not None:
        doc["seed"] = int(seed)
    if timings:
        doc["timings"] = to_primitive(timings)
    if result is not None:
        body = to_primitive(result)
        if isinstance(body, dict):
            doc.update(body)
        else:
            doc["result"] = body
    return json.dumps(doc, sort_keys=True, indent=2)


def write_report(path: Union[str, Path], text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text + "\n")
    return path


def write_field_csv(path: Union[str, Path], coords: np.ndarray, values: np.ndarray) -> Path:
    """One row per node: coordinates, then the flattened values."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ndim = coords.shape[-1]
    pts = coords.reshape(-1, ndim)
    vals = np.asarray(values).reshape(pts.shape[0], -1)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"y{k}" for k in range(ndim)] + [f"w{k}" for k in range(vals.shape[1])])
        for p, v in zip(pts, vals):
            writer.writerow([repr(float(x)) for x in p] + [repr(float(x)) for x in v])
    return path


def mask_runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """(start, length) runs of True in the row-major flattening."""
    flat = np.asarray(mask, dtype=bool).ravel()
    padded = np.concatenate([[False], flat, [False]]).astype(np.int8)
    edges = np.flatnonzero(np.diff(padded))
    return [(int(s), int(e - s)) for s, e in zip(edges[::2], edges[1::2])]


def write_mask_rle_csv(path: Union[str, Path], masks: Sequence[np.ndarray]) -> Path:
    """Run-length encoded masks: rows (mask, start, length)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["mask", "start", "length"])
        for index, mask in enumerate(masks):
            for start, length in mask_runs(mask):
                writer.writerow([index, start, length])
    return path


def write_cloud_csv(
    path: Union[str, Path], points: Sequence[np.ndarray], provenance: Optional[Sequence[str]] = None
) -> Path:
    """One flattened matrix per row with a provenance column."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = [np.asarray(p, dtype=float).ravel() for p in points]
    width = max((r.size for r in rows), default=0)
    provenance = list(provenance) if provenance is not None else [""] * len(rows)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{k}" for k in range(width)] + ["provenance"])
        for r, origin in zip(rows, provenance):
            writer.writerow([repr(float(x)) for x in r] + [origin])
    return path
