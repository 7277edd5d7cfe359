"""
Binary block format for grid arrays.

Layout, little-endian: magic b"WCIF", version u32, ndims u32, dims u32[ndims],
spacing f64[ndims], then the row-major f64 payload.
"""

from __future__ import annotations

import logging
import struct
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from nonunique.errors import DimensionError, PreconditionError

logger = logging.getLogger(__name__)

MAGIC = b"WCIF"
VERSION = 1


def write_wcif(path: Union[str, Path], data: np.ndarray, spacing: Sequence[float]) -> Path:
    """Write one array; spacing carries one entry per array axis."""
    data = np.ascontiguousarray(data, dtype="<f8")
    spacing = [float(h) for h in spacing]
    if len(spacing) != data.ndim:
        raise DimensionError(f"spacing needs {data.ndim} entries, got {len(spacing)}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = MAGIC + struct.pack("<II", VERSION, data.ndim)
    header += struct.pack(f"<{data.ndim}I", *data.shape)
    header += struct.pack(f"<{data.ndim}d", *spacing)
    with path.open("wb") as fh:
        fh.write(header)
        fh.write(data.tobytes(order="C"))
    logger.debug("wrote %s %s", path, data.shape)
    return path


def read_wcif(path: Union[str, Path]) -> tuple[np.ndarray, np.ndarray]:
    """
    Returns:
        (data, spacing).

    Raises:
        PreconditionError: bad magic, unknown version or truncated payload.
    """
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise PreconditionError(f"{path} is not a WCIF file (magic {raw[:4]!r})")
    version, ndims = struct.unpack_from("<II", raw, 4)
    if version != VERSION:
        raise PreconditionError(f"{path} has WCIF version {version}, expected {VERSION}")
    offset = 12
    dims = struct.unpack_from(f"<{ndims}I", raw, offset)
    offset += 4 * ndims
    spacing = np.array(struct.unpack_from(f"<{ndims}d", raw, offset))
    offset += 8 * ndims
    count = int(np.prod(dims)) if ndims else 1
    if len(raw) - offset != 8 * count:
        size = len(raw) - offset
        raise PreconditionError(f"{path} payload has {size} bytes, expected {8 * count}")
    data = np.frombuffer(raw, dtype="<f8", count=count, offset=offset).reshape(dims)
    return data.astype(float), spacing
