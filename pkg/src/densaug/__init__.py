"""densaug: budgeted sample selection by joint kNN-density and multimodal
semantic consistency, with single-transformation augmentation of the
selected subset.

The library is organized as:

    core        domain types, validation errors, the seeded RNG contract
    config      run configuration and the key=value parser
    fileio      EMB1 embeddings, selection manifests, label lists
    ann         online HNSW index plus the exact brute-force oracle
    scoring     density / consistency / joint distributions and selection
    adapter     linear adapters, symmetric InfoNCE, from-scratch Adam
    augment     the 14-op augmentation space and the one-op policy
    synthetic   Gaussian-cluster datasets with label noise and outliers
    corruptions five graded image corruptions
    pipeline    the epoch loop, simulation harness, and index benchmark
    cli         the `densaug` command
"""

from .core import (
    EmbeddingTable,
    FeatureStore,
    FileFormatError,
    LabelTable,
    ManifestEntry,
    ScoreTable,
    SelectionManifest,
    ValidationError,
    rng_for,
)
from .config import RunConfig, parse_config
from .ann import HnswIndex, QueryStats, brute_force_knn, l2_distances, recall_at_k
from .scoring import (
    SelectionPolicy,
    consistency_scores,
    density_scores,
    density_scores_exact,
    joint_scores,
    make_score_table,
    min_max_normalize,
    select,
)
from .adapter import (
    AdamState,
    AdapterTrainConfig,
    LinearAdapter,
    adam_step,
    apply_adapter,
    infonce_gradients,
    infonce_loss,
    train_adapters,
)
from .augment import AUG_OPS, AppliedAug, AugOp, Image, apply_op, augment_selected, trivial_augment
from .corruptions import CORRUPTION_KINDS, corrupt
from .synthetic import SyntheticSpec, synth_dataset
from .pipeline import EpochReport, bench_index, run_epoch, run_simulation

__version__ = "0.1.0"
