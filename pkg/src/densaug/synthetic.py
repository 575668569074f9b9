"""Desk-scale synthetic datasets: Gaussian feature clusters with matched
class-prototype embeddings, symmetric label noise, and feature-space outliers.

The construction is designed so the ground truth is known by construction:

* features for class c are drawn around a well-separated center, so kNN
  density reflects cluster membership;
* image embeddings are unit-normalized class prototypes plus small noise,
  text embeddings are the prototypes themselves (orthonormal when the
  embedding dimension allows), so a clean sample's cosine consistency with
  its own label is near 1 and with any other label near 0;
* label flips are exact: floor(noise_ratio * n) samples get a uniformly
  different class.  A flipped sample keeps its true-class features and
  image embedding (a mislabeled image still depicts its true class), so its
  consistency with the *observed* label is low by construction;
* outliers sit far from every center in feature space but keep their
  class-consistent embeddings: unusual but semantically valid samples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    STREAM_SYNTH,
    EmbeddingTable,
    FeatureStore,
    LabelTable,
    ValidationError,
    rng_for,
)

__all__ = ["SyntheticSpec", "synth_dataset"]

# noise added to prototype embeddings; small enough that argmax-over-classes
# of a clean sample's cosine is its own label for any realistic draw
_EMB_NOISE = 0.1


@dataclass(frozen=True)
class SyntheticSpec:
    n: int = 1000
    d: int = 8
    clusters: int = 5
    cluster_std: float = 1.0
    outlier_fraction: float = 0.02
    noise_ratio: float = 0.0
    drift_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.d < 1:
            raise ValidationError("n and d must be positive")
        if self.clusters < 2:
            raise ValidationError("clusters must be at least 2")
        if self.cluster_std <= 0:
            raise ValidationError("cluster_std must be positive")
        if not (0.0 <= self.outlier_fraction < 1.0):
            raise ValidationError("outlier_fraction must lie in [0, 1)")
        if not (0.0 <= self.noise_ratio < 1.0):
            raise ValidationError("noise_ratio must lie in [0, 1)")
        if self.drift_std < 0:
            raise ValidationError("drift_std must be non-negative")
        if self.seed < 0:
            raise ValidationError("seed must be non-negative")


def _prototypes(rng: np.random.Generator, clusters: int, d: int) -> np.ndarray:
    """Unit prototype per class; orthonormal via QR whenever d >= clusters."""
    raw = rng.normal(size=(d, max(clusters, 1)))
    if d >= clusters:
        q, _ = np.linalg.qr(raw)
        protos = q[:, :clusters].T
    else:
        protos = raw.T[:clusters]
    return protos / np.linalg.norm(protos, axis=1, keepdims=True)


def synth_dataset(
    spec: SyntheticSpec,
) -> tuple[FeatureStore, LabelTable, EmbeddingTable, EmbeddingTable]:
    """Generate (features, labels, image embeddings, text embeddings)."""
    rng = rng_for(spec.seed, STREAM_SYNTH)
    n, d, c = spec.n, spec.d, spec.clusters

    centers = rng.normal(size=(c, d)) * (4.0 * spec.cluster_std)
    true_labels = rng.integers(0, c, size=n)
    features = centers[true_labels] + rng.normal(0.0, spec.cluster_std, size=(n, d))

    n_outliers = int(np.floor(spec.outlier_fraction * n))
    if n_outliers > 0:
        outlier_ids = rng.choice(n, size=n_outliers, replace=False)
        radius = float(np.linalg.norm(centers, axis=1).max()) + 8.0 * spec.cluster_std
        directions = rng.normal(size=(n_outliers, d))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        features[outlier_ids] = directions * radius

    n_flips = int(np.floor(spec.noise_ratio * n))
    observed = true_labels.copy()
    noise_mask = np.zeros(n, dtype=bool)
    if n_flips > 0:
        flip_ids = rng.choice(n, size=n_flips, replace=False)
        offsets = rng.integers(1, c, size=n_flips)  # uniformly different class
        observed[flip_ids] = (true_labels[flip_ids] + offsets) % c
        noise_mask[flip_ids] = True

    protos = _prototypes(rng, c, d)
    img = protos[true_labels] + _EMB_NOISE * rng.normal(size=(n, d))
    img /= np.linalg.norm(img, axis=1, keepdims=True)

    return (
        FeatureStore(vectors=features, epoch=0),
        LabelTable(labels=observed, num_classes=c, noise_mask=noise_mask),
        EmbeddingTable(vectors=img.astype(np.float32), kind="image"),
        EmbeddingTable(vectors=protos.astype(np.float32), kind="text"),
    )
