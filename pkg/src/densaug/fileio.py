"""On-disk carriers: EMB1 embedding files, selection manifests, label lists.

EMB1 layout (little-endian throughout):
    magic ``EMB1`` (4 bytes) | kind (1 byte: 0=image, 1=text) |
    n (u64) | d (u32) | n*d float32, row-major.

Manifest layout (UTF-8 text):
    header   ``#epoch=<t> budget=<k> seed=<s>``
    records  ``<id>\\t<p_sel, 9 decimal digits>\\t<op|->\\t<magnitude|->\\t<sign|->``
    Signs are written as ``+1``/``-1`` so the absent marker ``-`` stays
    unambiguous.  Scores are quantized to 9 decimals on write; a manifest
    round-trips exactly when its scores are representable at that precision.
"""

from __future__ import annotations

import re
import struct
from pathlib import Path

import numpy as np

from .core import (
    EmbeddingTable,
    FileFormatError,
    LabelTable,
    ManifestEntry,
    SelectionManifest,
    ValidationError,
)

__all__ = [
    "read_embeddings",
    "write_embeddings",
    "read_manifest",
    "write_manifest",
    "read_labels",
    "write_labels",
]

_EMB_MAGIC = b"EMB1"
_KIND_CODE = {"image": 0, "text": 1}
_KIND_NAME = {v: k for k, v in _KIND_CODE.items()}


def write_embeddings(table: EmbeddingTable, path: str | Path) -> None:
    path = Path(path)
    payload = np.ascontiguousarray(table.vectors, dtype="<f4").tobytes()
    header = _EMB_MAGIC + struct.pack("<BQI", _KIND_CODE[table.kind], table.n, table.d)
    path.write_bytes(header + payload)


def read_embeddings(path: str | Path) -> EmbeddingTable:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise FileFormatError(f"cannot read embeddings {path}: {exc}") from exc
    if len(blob) < 4 or blob[:4] != _EMB_MAGIC:
        raise FileFormatError(f"{path}: bad magic (expected EMB1)")
    header_size = 4 + struct.calcsize("<BQI")
    if len(blob) < header_size:
        raise FileFormatError(f"{path}: truncated header")
    kind_code, n, d = struct.unpack("<BQI", blob[4:header_size])
    if kind_code not in _KIND_NAME:
        raise FileFormatError(f"{path}: unknown kind byte {kind_code}")
    expected = n * d * 4
    payload = blob[header_size:]
    if len(payload) < expected:
        raise FileFormatError(
            f"{path}: truncated payload (header declares {n}x{d}, "
            f"need {expected} bytes, have {len(payload)})"
        )
    if len(payload) > expected:
        raise FileFormatError(f"{path}: {len(payload) - expected} trailing bytes after payload")
    vectors = np.frombuffer(payload, dtype="<f4").reshape(n, d)
    return EmbeddingTable(vectors=vectors, kind=_KIND_NAME[kind_code])


_HEADER_RE = re.compile(r"^#epoch=(\d+) budget=(\d+) seed=(\d+)$")


def write_manifest(manifest: SelectionManifest, path: str | Path) -> None:
    lines = [f"#epoch={manifest.epoch} budget={manifest.budget} seed={manifest.seed}"]
    for e in manifest.entries:
        op = e.op if e.op is not None else "-"
        mag = repr(float(e.magnitude)) if e.magnitude is not None else "-"
        sign = ("+1" if e.sign > 0 else "-1") if e.sign is not None else "-"
        lines.append(f"{e.sample_id}\t{e.p_sel:.9f}\t{op}\t{mag}\t{sign}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path: str | Path) -> SelectionManifest:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise FileFormatError(f"cannot read manifest {path}: {exc}") from exc
    lines = text.splitlines()
    if not lines:
        raise FileFormatError(f"{path}: empty manifest file")
    m = _HEADER_RE.match(lines[0])
    if m is None:
        raise FileFormatError(f"{path}:1: malformed header {lines[0]!r}")
    epoch, budget, seed = (int(g) for g in m.groups())

    entries = []
    seen = set()
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 5:
            raise FileFormatError(f"{path}:{lineno}: expected 5 tab-separated fields")
        try:
            sample_id = int(parts[0])
            p_sel = float(parts[1])
            op = None if parts[2] == "-" else parts[2]
            magnitude = None if parts[3] == "-" else float(parts[3])
            sign = None if parts[4] == "-" else int(parts[4])
        except ValueError as exc:
            raise FileFormatError(f"{path}:{lineno}: malformed record ({exc})") from None
        if sample_id in seen:
            raise FileFormatError(f"{path}:{lineno}: duplicate sample id {sample_id}")
        seen.add(sample_id)
        entries.append(ManifestEntry(sample_id, p_sel, op, magnitude, sign))
    try:
        return SelectionManifest(epoch=epoch, budget=budget, seed=seed, entries=tuple(entries))
    except ValidationError as exc:
        raise FileFormatError(f"{path}: {exc}") from exc


def write_labels(labels: LabelTable, path: str | Path) -> None:
    Path(path).write_text("\n".join(str(int(v)) for v in labels.labels) + "\n", encoding="utf-8")


def read_labels(path: str | Path, num_classes: int | None = None) -> LabelTable:
    """Read one integer class index per line; C defaults to max+1."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise FileFormatError(f"cannot read labels {path}: {exc}") from exc
    values = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        try:
            values.append(int(stripped))
        except ValueError:
            raise FileFormatError(f"{path}:{lineno}: not an integer label: {stripped!r}") from None
    if not values:
        raise FileFormatError(f"{path}: no labels found")
    arr = np.asarray(values, dtype=np.int64)
    if num_classes is None:
        num_classes = int(arr.max()) + 1
    return LabelTable(labels=arr, num_classes=num_classes)
