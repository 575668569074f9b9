"""The three per-sample distributions and the budgeted selection rule.

Density is the mean exact distance to the k approximate nearest neighbors
of each sample, always excluding the sample itself (a self-distance of zero
would bias every score downward uniformly).  Consistency is the cosine
between a sample's image embedding and its label's text embedding; it is
computed once and cached by callers, because the embeddings never change
during the selection loop.  The joint score is the plain elementwise
product of the two Min-Max-normalized distributions, with no
renormalization.

Min-Max degenerates when every score is equal; that case maps to all-ones
rather than all-zeros so a constant factor cannot annihilate the other
distribution in the product.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .ann import HnswIndex, brute_force_knn
from .core import (
    STREAM_SELECT,
    EmbeddingTable,
    LabelTable,
    ScoreTable,
    ValidationError,
    rng_for,
)

__all__ = [
    "SelectionPolicy",
    "density_scores",
    "density_scores_exact",
    "min_max_normalize",
    "consistency_scores",
    "joint_scores",
    "make_score_table",
    "select",
    "write_scores_csv",
    "read_scores_csv",
]

DEFAULT_EF_SEARCH = 128


@dataclass(frozen=True)
class SelectionPolicy:
    """How the budget is spent.  Ties always break toward the smaller id.

    ``top_k`` takes the k largest joint scores deterministically;
    ``weighted_sample`` draws k distinct ids without replacement with
    probability proportional to the joint score.
    """

    mode: str = "top_k"

    def __post_init__(self):
        if self.mode not in ("top_k", "weighted_sample"):
            raise ValidationError(f"unknown selection mode {self.mode!r}")


def density_scores(
    index: HnswIndex,
    features,
    knn_k: int,
    ef_search: int | None = None,
) -> np.ndarray:
    """Mean distance from each sample to its k approximate nearest neighbors.

    Higher values mark samples in sparser regions.  The mean is taken over
    the k neighbors returned by the index with the sample itself excluded,
    summed in ascending (distance, id) order so results are reproducible
    bit-for-bit against the exhaustive oracle when recall is perfect.
    """
    n = features.n
    if len(index) != n:
        raise ValidationError(f"index holds {len(index)} samples, features hold {n}")
    if not (1 <= knn_k <= n - 1):
        raise ValidationError(f"knn_k={knn_k} out of range [1, {n - 1}]")
    ef = ef_search if ef_search is not None else max(DEFAULT_EF_SEARCH, knn_k + 1)
    ef = max(ef, knn_k + 1)

    rho = np.empty(n, dtype=np.float64)
    for i in range(n):
        found, _ = index.query(features.vectors[i], knn_k, ef, exclude=i)
        if len(found) < knn_k:
            raise ValidationError(
                f"index returned only {len(found)} neighbors for sample {i}; "
                "raise ef_search or check index contents"
            )
        rho[i] = sum(d for _, d in found) / knn_k
    return rho


def density_scores_exact(features, knn_k: int) -> np.ndarray:
    """Exhaustive-kNN density: the independent oracle for density_scores."""
    n = features.n
    if not (1 <= knn_k <= n - 1):
        raise ValidationError(f"knn_k={knn_k} out of range [1, {n - 1}]")
    rho = np.empty(n, dtype=np.float64)
    for i in range(n):
        found = brute_force_knn(features, i, knn_k, exclude_self=True)
        rho[i] = sum(d for _, d in found) / knn_k
    return rho


def min_max_normalize(scores: Sequence[float] | np.ndarray) -> np.ndarray:
    """Affine rescale of a score vector to [0, 1].

    Minimum maps to 0 and maximum to 1; a constant vector maps to all ones
    (see module docstring for why not zeros).
    """
    arr = np.asarray(scores, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValidationError("min_max_normalize expects a non-empty 1-D array")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("min_max_normalize: non-finite input")
    lo = arr.min()
    hi = arr.max()
    if hi == lo:
        return np.ones_like(arr)
    return (arr - lo) / (hi - lo)


def consistency_scores(
    image_embs: EmbeddingTable,
    text_embs: EmbeddingTable,
    labels: LabelTable,
) -> np.ndarray:
    """Cosine similarity between each image embedding and its label's text embedding.

    Returns raw cosines in [-1, 1]; Min-Max scaling to the consistency
    distribution is the caller's step, so the raw values stay available for
    cross-checks.
    """
    if image_embs.kind != "image":
        raise ValidationError(f"first table must have kind='image', got {image_embs.kind!r}")
    if text_embs.kind != "text":
        raise ValidationError(f"second table must have kind='text', got {text_embs.kind!r}")
    if image_embs.n != labels.n:
        raise ValidationError(f"{image_embs.n} image embeddings but {labels.n} labels")
    if text_embs.n != labels.num_classes:
        raise ValidationError(
            f"{text_embs.n} text embeddings but {labels.num_classes} classes"
        )
    if image_embs.d != text_embs.d:
        raise ValidationError("image and text embedding dimensions differ")

    img = image_embs.vectors.astype(np.float64)
    txt = text_embs.vectors.astype(np.float64)
    img_norm = np.linalg.norm(img, axis=1)
    txt_norm = np.linalg.norm(txt, axis=1)
    if np.any(img_norm == 0.0) or np.any(txt_norm == 0.0):
        raise ValidationError("zero-norm embedding row")
    paired = txt[labels.labels]
    con = np.einsum("ij,ij->i", img, paired) / (img_norm * txt_norm[labels.labels])
    return np.clip(con, -1.0, 1.0)


def joint_scores(p_rho: np.ndarray, p_con: np.ndarray) -> np.ndarray:
    """Elementwise product of the two normalized distributions."""
    a = np.asarray(p_rho, dtype=np.float64)
    b = np.asarray(p_con, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValidationError("joint_scores expects two 1-D arrays of equal length")
    for name, arr in (("p_rho", a), ("p_con", b)):
        if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
            raise ValidationError(f"{name} must lie in [0, 1]")
    return a * b


def make_score_table(rho_raw: np.ndarray, p_con: np.ndarray) -> ScoreTable:
    """Assemble a ScoreTable for one epoch from raw density and cached p_con."""
    p_rho = min_max_normalize(rho_raw)
    return ScoreTable(
        rho_raw=rho_raw, p_rho=p_rho, p_con=p_con, p_sel=joint_scores(p_rho, p_con)
    )


def select(
    p_sel: np.ndarray,
    budget: int,
    policy: SelectionPolicy | str = SelectionPolicy(),
    seed: int = 0,
    rng: np.random.Generator | None = None,
) -> list[int]:
    """Pick ``budget`` sample ids according to the policy.

    ``top_k`` output is ordered by descending score then ascending id;
    ``weighted_sample`` output is in draw order (successive draws without
    replacement, proportional to score; an all-zero remainder falls back to
    uniform).  Passing ``rng`` overrides the seed-derived stream.
    """
    if isinstance(policy, str):
        policy = SelectionPolicy(policy)
    scores = np.asarray(p_sel, dtype=np.float64)
    n = scores.shape[0]
    if scores.ndim != 1 or n == 0:
        raise ValidationError("p_sel must be a non-empty 1-D array")
    if not np.all(np.isfinite(scores)) or scores.min() < 0.0 or scores.max() > 1.0:
        raise ValidationError("p_sel must lie in [0, 1]")
    if not (1 <= budget <= n):
        raise ValidationError(f"budget={budget} out of range [1, {n}]")

    if policy.mode == "top_k":
        order = np.lexsort((np.arange(n), -scores))
        return [int(i) for i in order[:budget]]

    if rng is None:
        rng = rng_for(seed, STREAM_SELECT)
    remaining = list(range(n))
    weights = scores.copy()
    chosen: list[int] = []
    for _ in range(budget):
        w = weights[remaining]
        total = w.sum()
        if total > 0.0:
            pick = int(rng.choice(len(remaining), p=w / total))
        else:
            pick = int(rng.integers(len(remaining)))
        chosen.append(remaining.pop(pick))
    return chosen


def write_scores_csv(table: ScoreTable, path: str | Path) -> None:
    """Dump per-sample scores, 9 significant digits per value."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "rho_raw", "p_rho", "p_con", "p_sel"])
        for i in range(table.n):
            writer.writerow(
                [
                    i,
                    f"{table.rho_raw[i]:.9g}",
                    f"{table.p_rho[i]:.9g}",
                    f"{table.p_con[i]:.9g}",
                    f"{table.p_sel[i]:.9g}",
                ]
            )


def read_scores_csv(path: str | Path) -> dict[str, np.ndarray]:
    """Read a score dump back into arrays keyed by column name."""
    from .core import FileFormatError

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["id", "rho_raw", "p_rho", "p_con", "p_sel"]:
            raise FileFormatError(f"{path}: unexpected score CSV header {header}")
        cols: dict[str, list[float]] = {name: [] for name in header}
        for row in reader:
            if len(row) != 5:
                raise FileFormatError(f"{path}: malformed score row {row}")
            for name, value in zip(header, row):
                cols[name].append(float(value))
    return {name: np.asarray(vals) for name, vals in cols.items()}
