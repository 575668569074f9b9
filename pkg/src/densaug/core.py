"""Core domain types shared by every stage of the selection/augmentation engine.

All types are immutable after construction (arrays are frozen with
``setflags(write=False)``) and therefore safe to share across threads for
reading.  Every random draw anywhere in the package flows through
:func:`rng_for`, which keys NumPy's PCG64 generator by an explicit integer
tuple, so equal seeds reproduce byte-identical outputs on every platform.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ValidationError",
    "FileFormatError",
    "rng_for",
    "FeatureStore",
    "EmbeddingTable",
    "LabelTable",
    "ScoreTable",
    "ManifestEntry",
    "SelectionManifest",
]


class ValidationError(ValueError):
    """Bad arguments, out-of-range values, or violated preconditions."""


class FileFormatError(RuntimeError):
    """Corrupt or malformed on-disk data: bad magic, truncation, bad lines."""


# Stream labels for rng_for().  Each subsystem owns one label so that draws
# in one subsystem can never shift the stream seen by another.
STREAM_HNSW_LEVELS = 1
STREAM_SELECT = 2
STREAM_AUGMENT = 3
STREAM_SYNTH = 4
STREAM_ADAPTER = 5
STREAM_CORRUPT = 6
STREAM_BENCH = 7
STREAM_EPOCH = 8
STREAM_PERTURB = 9


def rng_for(seed: int, *stream: int) -> np.random.Generator:
    """Derive an independent, reproducible random stream.

    The generator algorithm is NumPy's PCG64, keyed by a SeedSequence over
    the integer tuple ``(seed, *stream)``.  This is the package-wide RNG
    contract: the algorithm is fixed and documented (see README) and must
    never change silently, because manifests, graphs, and augmentations are
    all byte-reproducible functions of it.
    """
    if seed < 0:
        raise ValidationError(f"seed must be non-negative, got {seed}")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, *stream))))


def _frozen_array(values, dtype, name: str, ndim: int) -> np.ndarray:
    arr = np.asarray(values, dtype=dtype)
    if arr.ndim != ndim:
        raise ValidationError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if arr.dtype.kind == "f" and not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class FeatureStore:
    """Per-sample feature vectors at one epoch; the space where density lives.

    Vectors are held as float64 so that distance arithmetic downstream is
    done in one fixed precision.  Sample ids are implicit row indices,
    dense in ``[0, n)``.
    """

    vectors: np.ndarray
    epoch: int = 0

    def __post_init__(self):
        object.__setattr__(self, "vectors", _frozen_array(self.vectors, np.float64, "vectors", 2))
        if self.n < 1:
            raise ValidationError("FeatureStore needs at least one sample")
        if self.epoch < 0:
            raise ValidationError("epoch must be non-negative")

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def d(self) -> int:
        return self.vectors.shape[1]


@dataclass(frozen=True)
class EmbeddingTable:
    """Encoder output rows (float32, the wire precision of EMB1 files)."""

    vectors: np.ndarray
    kind: str  # "image" | "text"

    def __post_init__(self):
        if self.kind not in ("image", "text"):
            raise ValidationError(f"kind must be 'image' or 'text', got {self.kind!r}")
        object.__setattr__(self, "vectors", _frozen_array(self.vectors, np.float32, "vectors", 2))
        if self.n < 1:
            raise ValidationError("EmbeddingTable needs at least one row")

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def d(self) -> int:
        return self.vectors.shape[1]


@dataclass(frozen=True)
class LabelTable:
    """Per-sample class indices plus an optional flipped-label mask."""

    labels: np.ndarray
    num_classes: int
    noise_mask: np.ndarray | None = None

    def __post_init__(self):
        labels = _frozen_array(self.labels, np.int64, "labels", 1)
        object.__setattr__(self, "labels", labels)
        if self.num_classes < 1:
            raise ValidationError("num_classes must be positive")
        if labels.size == 0:
            raise ValidationError("LabelTable needs at least one label")
        if labels.min() < 0 or labels.max() >= self.num_classes:
            raise ValidationError(
                f"labels must lie in [0, {self.num_classes}), "
                f"got range [{labels.min()}, {labels.max()}]"
            )
        if self.noise_mask is not None:
            mask = _frozen_array(self.noise_mask, bool, "noise_mask", 1)
            if mask.shape[0] != labels.shape[0]:
                raise ValidationError("noise_mask length must equal number of labels")
            object.__setattr__(self, "noise_mask", mask)

    @property
    def n(self) -> int:
        return self.labels.shape[0]


@dataclass(frozen=True)
class ScoreTable:
    """Raw density plus the three normalized distributions for one epoch.

    The joint score is stored rather than recomputed so the invariant
    ``p_sel == p_rho * p_con`` can be checked to exact equality.
    """

    rho_raw: np.ndarray
    p_rho: np.ndarray
    p_con: np.ndarray
    p_sel: np.ndarray

    def __post_init__(self):
        for name in ("rho_raw", "p_rho", "p_con", "p_sel"):
            object.__setattr__(self, name, _frozen_array(getattr(self, name), np.float64, name, 1))
        n = self.rho_raw.shape[0]
        for name in ("p_rho", "p_con", "p_sel"):
            if getattr(self, name).shape[0] != n:
                raise ValidationError("all score arrays must have equal length")
        for name in ("p_rho", "p_con", "p_sel"):
            arr = getattr(self, name)
            if arr.min() < 0.0 or arr.max() > 1.0:
                raise ValidationError(f"{name} must lie in [0, 1]")
        if np.any(self.rho_raw < 0.0):
            raise ValidationError("rho_raw must be non-negative")
        if not np.array_equal(self.p_sel, self.p_rho * self.p_con):
            raise ValidationError("p_sel must equal p_rho * p_con exactly")

    @property
    def n(self) -> int:
        return self.rho_raw.shape[0]


@dataclass(frozen=True)
class ManifestEntry:
    """One selected sample: its joint score and, if augmented, the applied op."""

    sample_id: int
    p_sel: float
    op: str | None = None
    magnitude: float | None = None
    sign: int | None = None

    def __post_init__(self):
        if self.sample_id < 0:
            raise ValidationError("sample_id must be non-negative")
        if self.sign is not None and self.sign not in (1, -1):
            raise ValidationError("sign must be +1 or -1 when present")


@dataclass(frozen=True)
class SelectionManifest:
    """Per-epoch record of the selected subset, in the policy's output order."""

    epoch: int
    budget: int
    seed: int
    entries: tuple[ManifestEntry, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        if self.epoch < 0 or self.budget < 0 or self.seed < 0:
            raise ValidationError("epoch, budget, and seed must be non-negative")
        ids = [e.sample_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValidationError("manifest contains duplicate sample ids")
        if len(ids) > self.budget:
            raise ValidationError("manifest holds more entries than its budget")

    @property
    def sample_ids(self) -> list[int]:
        return [e.sample_id for e in self.entries]
