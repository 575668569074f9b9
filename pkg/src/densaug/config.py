"""Run configuration: documented defaults plus a line-oriented key=value parser.

The config carrier is deliberately trivial: one ``key=value`` per line,
``#`` starts a comment, dotted keys namespace subsystems (``hnsw.M``).
Unknown keys are rejected so typos cannot silently fall back to defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from .core import ValidationError, FileFormatError

__all__ = ["RunConfig", "parse_config", "dump_config"]


@dataclass(frozen=True)
class RunConfig:
    # selection loop
    selection_ratio: float = 0.5
    knn_k: int = 10
    epochs: int = 10
    anneal_epochs: int = 0
    seed: int = 0
    policy: str = "top_k"  # or "weighted_sample"
    use_consistency: bool = True
    # hnsw index
    hnsw_m: int = 16
    hnsw_ef_construction: int = 200
    hnsw_ef_search: int = 128
    hnsw_rebuild_each_epoch: bool = False
    # augmentation (simulation mode emulates augmentation as a bounded
    # feature perturbation; drift_scale bounds the perturbation norm and
    # defaults to twice the default synthetic cluster std, small enough to
    # stay within a sample's local neighborhood)
    augment_enabled: bool = True
    augment_drift_scale: float = 2.0
    # adapter fine-tuning
    adapter_lr: float = 1e-4
    adapter_beta1: float = 0.9
    adapter_beta2: float = 0.999
    adapter_eps: float = 1e-8
    adapter_decay_factor: float = 0.1
    adapter_decay_milestones: tuple[int, ...] | None = None  # None -> 50%/75% of epochs
    adapter_temperature: float = 0.07
    adapter_batch_size: int = 256
    adapter_epochs: int = 15
    # synthetic dataset (used by the `simulate` entry point)
    synth_n: int = 1000
    synth_d: int = 8
    synth_clusters: int = 5
    synth_cluster_std: float = 1.0
    synth_outlier_fraction: float = 0.02
    synth_noise_ratio: float = 0.0
    synth_drift_std: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.selection_ratio <= 1.0):
            raise ValidationError(
                f"selection_ratio must lie in (0, 1], got {self.selection_ratio}"
            )
        for name in ("knn_k", "epochs", "hnsw_m", "hnsw_ef_construction",
                     "hnsw_ef_search", "adapter_batch_size", "adapter_epochs"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{_KEY_OF[name]} must be a positive integer")
        if self.anneal_epochs < 0:
            raise ValidationError("anneal_epochs must be non-negative")
        if self.anneal_epochs > self.epochs:
            raise ValidationError("anneal_epochs must not exceed epochs")
        if self.seed < 0:
            raise ValidationError("seed must be non-negative")
        if self.policy not in ("top_k", "weighted_sample"):
            raise ValidationError(
                f"selection.policy must be 'top_k' or 'weighted_sample', got {self.policy!r}"
            )
        for name in ("adapter_lr", "adapter_eps", "adapter_temperature"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{_KEY_OF[name]} must be positive")
        for name in ("adapter_beta1", "adapter_beta2"):
            if not (0.0 <= getattr(self, name) < 1.0):
                raise ValidationError(f"{_KEY_OF[name]} must lie in [0, 1)")
        if not (0.0 < self.adapter_decay_factor <= 1.0):
            raise ValidationError("adapter.decay_factor must lie in (0, 1]")
        if self.adapter_decay_milestones is not None:
            ms = tuple(int(m) for m in self.adapter_decay_milestones)
            if any(m < 0 for m in ms):
                raise ValidationError("adapter.decay_milestones must be non-negative")
            object.__setattr__(self, "adapter_decay_milestones", ms)
        if self.augment_drift_scale < 0:
            raise ValidationError("augment.drift_scale must be non-negative")
        if self.synth_n < 1 or self.synth_d < 1:
            raise ValidationError("synth.n and synth.d must be positive")
        if self.synth_clusters < 2:
            raise ValidationError("synth.clusters must be at least 2")
        if not (0.0 <= self.synth_noise_ratio < 1.0):
            raise ValidationError("synth.noise_ratio must lie in [0, 1)")
        if not (0.0 <= self.synth_outlier_fraction < 1.0):
            raise ValidationError("synth.outlier_fraction must lie in [0, 1)")
        if self.synth_cluster_std <= 0 or self.synth_drift_std < 0:
            raise ValidationError("synth.cluster_std must be positive and synth.drift_std non-negative")

    def decay_milestones(self) -> tuple[int, ...]:
        """Milestone epochs at which the adapter learning rate decays.

        Defaults to 50% and 75% of the adapter epoch count when not set
        explicitly.
        """
        if self.adapter_decay_milestones is not None:
            return self.adapter_decay_milestones
        return (self.adapter_epochs // 2, (3 * self.adapter_epochs) // 4)


# key-in-file  <->  RunConfig field
_FIELD_OF = {
    "selection_ratio": "selection_ratio",
    "knn_k": "knn_k",
    "epochs": "epochs",
    "anneal_epochs": "anneal_epochs",
    "seed": "seed",
    "selection.policy": "policy",
    "selection.use_consistency": "use_consistency",
    "hnsw.M": "hnsw_m",
    "hnsw.ef_construction": "hnsw_ef_construction",
    "hnsw.ef_search": "hnsw_ef_search",
    "hnsw.rebuild_each_epoch": "hnsw_rebuild_each_epoch",
    "augment.enabled": "augment_enabled",
    "augment.drift_scale": "augment_drift_scale",
    "adapter.lr": "adapter_lr",
    "adapter.beta1": "adapter_beta1",
    "adapter.beta2": "adapter_beta2",
    "adapter.eps": "adapter_eps",
    "adapter.decay_factor": "adapter_decay_factor",
    "adapter.decay_milestones": "adapter_decay_milestones",
    "adapter.temperature": "adapter_temperature",
    "adapter.batch_size": "adapter_batch_size",
    "adapter.epochs": "adapter_epochs",
    "synth.n": "synth_n",
    "synth.d": "synth_d",
    "synth.clusters": "synth_clusters",
    "synth.cluster_std": "synth_cluster_std",
    "synth.outlier_fraction": "synth_outlier_fraction",
    "synth.noise_ratio": "synth_noise_ratio",
    "synth.drift_std": "synth_drift_std",
}
_KEY_OF = {v: k for k, v in _FIELD_OF.items()}

_BOOL_FIELDS = {"use_consistency", "hnsw_rebuild_each_epoch", "augment_enabled"}
_INT_FIELDS = {
    "knn_k", "epochs", "anneal_epochs", "seed", "hnsw_m", "hnsw_ef_construction",
    "hnsw_ef_search", "adapter_batch_size", "adapter_epochs", "synth_n", "synth_d",
    "synth_clusters",
}
_FLOAT_FIELDS = {
    "selection_ratio", "augment_drift_scale", "adapter_lr", "adapter_beta1",
    "adapter_beta2", "adapter_eps", "adapter_decay_factor", "adapter_temperature",
    "synth_cluster_std", "synth_outlier_fraction", "synth_noise_ratio", "synth_drift_std",
}


def _parse_value(key: str, fieldname: str, raw: str):
    raw = raw.strip()
    try:
        if fieldname in _BOOL_FIELDS:
            if raw.lower() in ("true", "1", "yes", "on"):
                return True
            if raw.lower() in ("false", "0", "no", "off"):
                return False
            raise ValueError("expected a boolean")
        if fieldname in _INT_FIELDS:
            return int(raw)
        if fieldname in _FLOAT_FIELDS:
            return float(raw)
        if fieldname == "adapter_decay_milestones":
            if raw == "":
                return None
            return tuple(int(part) for part in raw.split(","))
        return raw  # plain string fields (selection.policy)
    except ValueError as exc:
        raise ValidationError(f"config key {key!r}: cannot parse value {raw!r} ({exc})") from None


def parse_config(path: str | Path) -> RunConfig:
    """Read a key=value config file, filling documented defaults for absent keys.

    Raises :class:`FileFormatError` for unreadable or malformed files and
    :class:`ValidationError` for unknown keys or out-of-range values; every
    message names the offending key and line.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise FileFormatError(f"cannot read config {path}: {exc}") from exc

    overrides = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise FileFormatError(f"{path}:{lineno}: malformed line {line!r} (expected key=value)")
        key, raw = stripped.split("=", 1)
        key = key.strip()
        if key not in _FIELD_OF:
            raise ValidationError(f"{path}:{lineno}: unknown config key {key!r}")
        fieldname = _FIELD_OF[key]
        if fieldname in overrides:
            raise ValidationError(f"{path}:{lineno}: duplicate config key {key!r}")
        overrides[fieldname] = _parse_value(key, fieldname, raw)

    return replace(RunConfig(), **overrides)


def dump_config(cfg: RunConfig) -> str:
    """Render a config as the key=value text that parse_config accepts."""
    lines = []
    for f in fields(RunConfig):
        value = getattr(cfg, f.name)
        key = _KEY_OF[f.name]
        if f.name == "adapter_decay_milestones":
            if value is None:
                continue  # derived default, not a literal value
            rendered = ",".join(str(m) for m in value)
        elif isinstance(value, bool):
            rendered = "true" if value else "false"
        else:
            rendered = repr(value) if isinstance(value, float) else str(value)
        lines.append(f"{key}={rendered}")
    return "\n".join(lines) + "\n"
