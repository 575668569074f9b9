"""Writer for the EMB1 embedding file format.

Implemented here from the published layout rather than imported from the
consuming tool, so the two sides of the interface stay independent:

    magic ``EMB1`` | kind u8 (0 = image, 1 = text) | n u64 LE | d u32 LE |
    n * d float32 LE, row-major.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

KIND_IMAGE = 0
KIND_TEXT = 1


def write_emb1(vectors: np.ndarray, kind: int, path: str | Path) -> None:
    arr = np.ascontiguousarray(vectors, dtype="<f4")
    if arr.ndim != 2:
        raise ValueError(f"embedding matrix must be 2-D, got shape {arr.shape}")
    if kind not in (KIND_IMAGE, KIND_TEXT):
        raise ValueError(f"kind must be 0 (image) or 1 (text), got {kind}")
    n, d = arr.shape
    header = b"EMB1" + struct.pack("<BQI", kind, n, d)
    Path(path).write_bytes(header + arr.tobytes())
