"""The per-epoch selection loop, the end-to-end simulation, and the index bench.

Each epoch runs four strictly ordered phases:

    1. update   apply pending feature changes and bring the index in sync
    2. score    recompute density -> p_rho, combine with cached p_con -> p_sel
    3. select   spend the budget k = round(ratio * n), or all n inside the
                final ``anneal_epochs`` (selection fully annealed)
    4. augment  transform the selected samples

Scoring never observes a partially updated index, and augmented features
re-enter the index at the *next* epoch's update phase.  In simulation mode
(no images attached) augmentation is emulated as a bounded feature
perturbation: a uniformly random direction with norm uniform in
[0, drift_scale], small enough that samples stay within their local
neighborhood.  When real images are attached, the augment phase applies one
transformation per selected image and records it in the manifest.

Wall-clock timings ride along in each EpochReport for auditing phase order
and cost; the CSV writer zeroes them by default so that equal seed means
byte-equal report files.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ann import HnswIndex
from .augment import Image, augment_selected
from .config import RunConfig
from .core import (
    STREAM_EPOCH,
    STREAM_PERTURB,
    STREAM_SELECT,
    FeatureStore,
    LabelTable,
    ManifestEntry,
    SelectionManifest,
    ValidationError,
    rng_for,
)
from .scoring import (
    consistency_scores,
    density_scores,
    joint_scores,
    min_max_normalize,
    select,
)
from .synthetic import SyntheticSpec, synth_dataset

__all__ = [
    "EpochReport",
    "SimulationState",
    "SimulationResult",
    "run_epoch",
    "run_simulation",
    "bench_index",
    "write_reports_csv",
    "write_bench_csv",
]

HISTOGRAM_EDGES = np.linspace(0.0, 1.0, 11)  # ten fixed bins over p_rho


@dataclass
class EpochReport:
    epoch: int
    selected: int
    mean_p_sel: float
    min_p_sel: float
    max_p_sel: float
    histogram: tuple[int, ...]
    noise_selection_rate: float
    update_ms: float
    score_ms: float
    select_ms: float
    augment_ms: float

    @property
    def bottom_decile_mass(self) -> int:
        """How many samples fall in the lowest p_rho bin (the densest decile)."""
        return self.histogram[0]


@dataclass
class SimulationState:
    """Everything the epoch loop mutates.

    ``p_con`` is precomputed once (the embeddings never change during the
    loop); ``pending`` holds feature vectors written by the previous
    epoch's augment phase, applied at the next update phase.
    """

    features: FeatureStore
    labels: LabelTable
    p_con: np.ndarray
    index: HnswIndex
    images: dict[int, Image] | None = None
    pending: dict[int, np.ndarray] = field(default_factory=dict)
    drift_std: float = 0.0  # per-epoch jitter applied to every feature
    epoch: int = 0
    built: bool = False


def _budget(config: RunConfig, n: int, epoch: int) -> int:
    if epoch >= config.epochs - config.anneal_epochs:
        return n
    k = int(np.floor(config.selection_ratio * n + 0.5))
    return max(1, min(n, k))


def run_epoch(state: SimulationState, config: RunConfig) -> tuple[SelectionManifest, EpochReport]:
    """Advance the loop by one epoch; returns the manifest and report."""
    if state.p_con is None or len(state.p_con) != state.features.n:
        raise ValidationError("p_con missing or wrong length; precompute it before the loop")
    n = state.features.n
    epoch = state.epoch
    seed = config.seed

    # ---- phase 1: update ---------------------------------------------------
    t0 = time.perf_counter()
    if not state.built:
        if len(state.index) != 0:
            raise ValidationError("index not empty at first epoch")
        for i in range(n):
            state.index.insert(i, state.features.vectors[i])
        state.built = True
    else:
        vectors = np.array(state.features.vectors, copy=True)
        changed: set[int] = set()
        for i, vec in state.pending.items():
            vectors[i] = vec
            changed.add(i)
        state.pending.clear()
        drift = state.drift_std
        if drift > 0.0:
            vectors += rng_for(seed, STREAM_EPOCH, epoch).normal(0.0, drift, size=vectors.shape)
            changed = set(range(n))
        if changed:
            state.features = FeatureStore(vectors=vectors, epoch=epoch)
            if config.hnsw_rebuild_each_epoch:
                state.index = HnswIndex(
                    state.index.dim,
                    m=config.hnsw_m,
                    ef_construction=config.hnsw_ef_construction,
                    seed=seed,
                )
                for i in range(n):
                    state.index.insert(i, vectors[i])
            else:
                for i in sorted(changed):
                    state.index.update(i, vectors[i])
    if len(state.index) != n:
        raise ValidationError(f"index holds {len(state.index)} samples, expected {n}")
    update_ms = (time.perf_counter() - t0) * 1e3

    # ---- phase 2: score ------------------------------------------------------
    t0 = time.perf_counter()
    rho = density_scores(state.index, state.features, config.knn_k, config.hnsw_ef_search)
    p_rho = min_max_normalize(rho)
    p_con = state.p_con if config.use_consistency else np.ones(n)
    p_sel = joint_scores(p_rho, p_con)
    score_ms = (time.perf_counter() - t0) * 1e3

    # ---- phase 3: select -----------------------------------------------------
    t0 = time.perf_counter()
    k = _budget(config, n, epoch)
    chosen = select(p_sel, k, config.policy, rng=rng_for(seed, STREAM_SELECT, epoch))
    manifest = SelectionManifest(
        epoch=epoch,
        budget=k,
        seed=seed,
        entries=tuple(ManifestEntry(i, float(p_sel[i])) for i in chosen),
    )
    select_ms = (time.perf_counter() - t0) * 1e3

    # ---- phase 4: augment ------------------------------------------------------
    t0 = time.perf_counter()
    if config.augment_enabled:
        if state.images is not None:
            augmented, manifest = augment_selected(state.images, manifest, seed)
            state.images.update(augmented)
        else:
            scale = config.augment_drift_scale
            d = state.features.d
            for i in chosen:
                rng = rng_for(seed, STREAM_PERTURB, epoch, i)
                direction = rng.normal(size=d)
                direction /= np.linalg.norm(direction)
                state.pending[i] = state.features.vectors[i] + direction * (rng.random() * scale)
    augment_ms = (time.perf_counter() - t0) * 1e3

    hist, _ = np.histogram(p_rho, bins=HISTOGRAM_EDGES)
    mask = state.labels.noise_mask
    noise_rate = float(mask[chosen].mean()) if mask is not None else 0.0
    report = EpochReport(
        epoch=epoch,
        selected=len(chosen),
        mean_p_sel=float(p_sel.mean()),
        min_p_sel=float(p_sel.min()),
        max_p_sel=float(p_sel.max()),
        histogram=tuple(int(x) for x in hist),
        noise_selection_rate=noise_rate,
        update_ms=update_ms,
        score_ms=score_ms,
        select_ms=select_ms,
        augment_ms=augment_ms,
    )
    state.epoch += 1
    return manifest, report


@dataclass(frozen=True)
class SimulationSummary:
    epochs: int
    first_bottom_decile_mass: int
    final_bottom_decile_mass: int
    noise_selection_rates: tuple[float, ...]

    def lines(self) -> list[str]:
        return [
            f"epochs={self.epochs}",
            f"first_bottom_decile_mass={self.first_bottom_decile_mass}",
            f"final_bottom_decile_mass={self.final_bottom_decile_mass}",
            "noise_selection_rates=" + ",".join(f"{r:.9g}" for r in self.noise_selection_rates),
        ]


@dataclass
class SimulationResult:
    reports: list[EpochReport]
    manifests: list[SelectionManifest]
    summary: SimulationSummary


def make_state(spec: SyntheticSpec, config: RunConfig) -> SimulationState:
    """Build the initial loop state from a synthetic dataset."""
    features, labels, img_table, txt_table = synth_dataset(spec)
    con = consistency_scores(img_table, txt_table, labels)
    p_con = min_max_normalize(con)
    index = HnswIndex(
        features.d,
        m=config.hnsw_m,
        ef_construction=config.hnsw_ef_construction,
        seed=config.seed,
    )
    return SimulationState(
        features=features, labels=labels, p_con=p_con, index=index, drift_std=spec.drift_std
    )


def run_simulation(spec: SyntheticSpec, config: RunConfig) -> SimulationResult:
    """Run the full epoch loop on synthetic data."""
    state = make_state(spec, config)
    reports: list[EpochReport] = []
    manifests: list[SelectionManifest] = []
    for _ in range(config.epochs):
        manifest, report = run_epoch(state, config)
        manifests.append(manifest)
        reports.append(report)
    summary = SimulationSummary(
        epochs=config.epochs,
        first_bottom_decile_mass=reports[0].bottom_decile_mass,
        final_bottom_decile_mass=reports[-1].bottom_decile_mass,
        noise_selection_rates=tuple(r.noise_selection_rate for r in reports),
    )
    return SimulationResult(reports=reports, manifests=manifests, summary=summary)


@dataclass(frozen=True)
class BenchRow:
    n: int
    mean_distance_evaluations: float
    ms_per_query: float


def bench_index(
    sizes: list[int],
    config: RunConfig,
    dim: int = 32,
    n_queries: int = 100,
    seed: int | None = None,
) -> list[BenchRow]:
    """Build one index per size and measure query work via QueryStats.

    Evaluation counts are deterministic given the seed; wall-clock is not.
    """
    from .core import STREAM_BENCH

    if sorted(sizes) != list(sizes):
        raise ValidationError("sizes must be ascending")
    seed = config.seed if seed is None else seed
    rows: list[BenchRow] = []
    for n in sizes:
        rng = rng_for(seed, STREAM_BENCH, n)
        data = rng.normal(size=(n + n_queries, dim))
        index = HnswIndex(
            dim, m=config.hnsw_m, ef_construction=config.hnsw_ef_construction, seed=seed
        )
        for i in range(n):
            index.insert(i, data[i])
        total_evals = 0
        t0 = time.perf_counter()
        for q in range(n_queries):
            _, stats = index.query(data[n + q], config.knn_k, config.hnsw_ef_search)
            total_evals += stats.distance_evaluations
        elapsed_ms = (time.perf_counter() - t0) * 1e3
        rows.append(BenchRow(n, total_evals / n_queries, elapsed_ms / n_queries))
    return rows


_REPORT_HEADER = (
    "epoch,selected,mean_psel,bottom_decile_mass,noise_sel_rate,"
    "update_ms,score_ms,select_ms,augment_ms"
)


def write_reports_csv(reports: list[EpochReport], path: str | Path, timings: bool = False) -> None:
    """Write the per-epoch report stream.

    With ``timings=False`` (the default) the four ms columns are written as
    0.000 so that two equally seeded runs produce byte-identical files.
    """
    lines = [_REPORT_HEADER]
    for r in reports:
        ms = (r.update_ms, r.score_ms, r.select_ms, r.augment_ms) if timings else (0.0,) * 4
        lines.append(
            f"{r.epoch},{r.selected},{r.mean_p_sel:.9g},{r.bottom_decile_mass},"
            f"{r.noise_selection_rate:.9g},"
            + ",".join(f"{v:.3f}" for v in ms)
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_bench_csv(rows: list[BenchRow], path: str | Path) -> None:
    lines = ["n,mean_distance_evaluations,ms_per_query"]
    for row in rows:
        lines.append(f"{row.n},{row.mean_distance_evaluations:.9g},{row.ms_per_query:.3f}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
