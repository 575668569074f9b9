"""Linear adapters over frozen embeddings, tuned with a symmetric InfoNCE loss.

The adapter is a single square linear layer initialized to the identity, so
before any training step the adapted embedding space is bit-identical to
the raw one — the pre-training consistency scores are exactly the raw
cosines, which gives tests a clean regression anchor.

The loss treats each in-batch image/text pair as the positive and every
other row as a negative, symmetrized over the image->text and text->image
directions:

    S[i, j] = <normalize(img_i), normalize(txt_j)> / temperature
    loss    = (CE_rows(S) + CE_cols(S)) / 2

Gradients are analytic (backprop through linear -> l2-normalize -> scaled
similarity -> cross entropy) and are validated against central finite
differences in the test suite.  The optimizer is a from-scratch
bias-corrected Adam with milestone learning-rate decay.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import STREAM_ADAPTER, EmbeddingTable, ValidationError, rng_for

__all__ = [
    "LinearAdapter",
    "AdapterGradients",
    "AdamState",
    "AdapterTrainConfig",
    "adapter_forward",
    "apply_adapter",
    "infonce_loss",
    "infonce_gradients",
    "adam_step",
    "train_adapters",
    "save_adapter",
    "load_adapter",
]


@dataclass
class LinearAdapter:
    """One square linear map ``x -> W x + b``."""

    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.weight.shape[0] != self.weight.shape[1]:
            raise ValidationError("adapter weight must be a square matrix")
        if self.bias.shape != (self.weight.shape[0],):
            raise ValidationError("adapter bias shape must match weight rows")
        if not (np.all(np.isfinite(self.weight)) and np.all(np.isfinite(self.bias))):
            raise ValidationError("adapter parameters must be finite")

    @classmethod
    def identity(cls, dim: int) -> "LinearAdapter":
        return cls(weight=np.eye(dim), bias=np.zeros(dim))

    @property
    def dim(self) -> int:
        return self.weight.shape[0]

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.dim:
            raise ValidationError(f"input dimension {x.shape[-1]} != adapter dimension {self.dim}")
        return x @ self.weight.T + self.bias


def adapter_forward(adapter: LinearAdapter, x: np.ndarray) -> np.ndarray:
    return adapter.forward(x)


def apply_adapter(adapter: LinearAdapter, table: EmbeddingTable) -> EmbeddingTable:
    """Transform a whole embedding table, returning a new float32 table."""
    out = adapter.forward(table.vectors.astype(np.float64))
    return EmbeddingTable(vectors=out.astype(np.float32), kind=table.kind)


def _normalize_rows(x: np.ndarray, what: str) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(x, axis=1)
    if np.any(norms == 0.0):
        raise ValidationError(f"zero-norm row in {what}")
    return x / norms[:, None], norms


def _log_softmax(s: np.ndarray, axis: int) -> np.ndarray:
    shifted = s - s.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def _diag_loss(s: np.ndarray) -> float:
    """Mean diagonal cross-entropy over rows and columns of the logit matrix.

    All reductions are correctly rounded (math.fsum), which makes the loss
    an exact set-function of the batch: jointly permuting the pairs cannot
    change the value by even one ulp.
    """
    b = s.shape[0]
    row_ce = []
    col_ce = []
    for i in range(b):
        row = s[i].tolist()
        m = max(row)
        row_ce.append(math.log(math.fsum(math.exp(v - m) for v in row)) + m - row[i])
        col = s[:, i].tolist()
        mc = max(col)
        col_ce.append(math.log(math.fsum(math.exp(v - mc) for v in col)) + mc - col[i])
    return 0.5 * (math.fsum(row_ce) / b + math.fsum(col_ce) / b)


def infonce_loss(img_batch: np.ndarray, txt_batch: np.ndarray, temperature: float) -> float:
    """Symmetric InfoNCE over one batch of paired rows.

    Rows are l2-normalized internally.  A batch of one yields exactly zero
    (softmax over a single logit).
    """
    img = np.asarray(img_batch, dtype=np.float64)
    txt = np.asarray(txt_batch, dtype=np.float64)
    if img.ndim != 2 or img.shape != txt.shape:
        raise ValidationError("batches must be 2-D with identical shapes")
    if temperature <= 0.0:
        raise ValidationError("temperature must be positive")
    u, _ = _normalize_rows(img, "image batch")
    v, _ = _normalize_rows(txt, "text batch")
    s = (u @ v.T) / temperature
    return _diag_loss(s)


@dataclass
class AdapterGradients:
    image_weight: np.ndarray
    image_bias: np.ndarray
    text_weight: np.ndarray
    text_bias: np.ndarray
    loss: float


def infonce_gradients(
    img_batch: np.ndarray,
    txt_batch: np.ndarray,
    image_adapter: LinearAdapter,
    text_adapter: LinearAdapter,
    temperature: float,
) -> AdapterGradients:
    """Exact analytic gradients of the symmetric InfoNCE loss w.r.t. both adapters.

    The raw batches are the frozen encoder outputs; gradients flow only
    through the adapters.
    """
    x_img = np.asarray(img_batch, dtype=np.float64)
    x_txt = np.asarray(txt_batch, dtype=np.float64)
    if x_img.ndim != 2 or x_img.shape != x_txt.shape:
        raise ValidationError("batches must be 2-D with identical shapes")
    if temperature <= 0.0:
        raise ValidationError("temperature must be positive")

    a = image_adapter.forward(x_img)  # B x d
    c = text_adapter.forward(x_txt)
    u, a_norm = _normalize_rows(a, "adapted image batch")
    v, c_norm = _normalize_rows(c, "adapted text batch")

    s = (u @ v.T) / temperature
    b = s.shape[0]
    log_p_row = _log_softmax(s, axis=1)
    log_p_col = _log_softmax(s, axis=0)
    loss = _diag_loss(s)

    eye = np.eye(b)
    grad_s = 0.5 / b * ((np.exp(log_p_row) - eye) + (np.exp(log_p_col) - eye))

    grad_u = (grad_s @ v) / temperature
    grad_v = (grad_s.T @ u) / temperature

    # through row normalization: g_a = (g_u - (g_u . u) u) / |a|
    grad_a = (grad_u - (grad_u * u).sum(axis=1, keepdims=True) * u) / a_norm[:, None]
    grad_c = (grad_v - (grad_v * v).sum(axis=1, keepdims=True) * v) / c_norm[:, None]

    return AdapterGradients(
        image_weight=grad_a.T @ x_img,
        image_bias=grad_a.sum(axis=0),
        text_weight=grad_c.T @ x_txt,
        text_bias=grad_c.sum(axis=0),
        loss=loss,
    )


@dataclass
class AdamState:
    """Adam accumulators plus the milestone learning-rate schedule.

    ``lr`` is the *current* learning rate; ``advance_epoch`` multiplies it
    by ``decay_factor`` when a milestone epoch is reached.
    """

    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    decay_factor: float = 0.1
    decay_milestones: tuple[int, ...] = ()
    _decayed: set[int] = field(default_factory=set)

    @classmethod
    def init(cls, params: list[np.ndarray], lr: float, **kwargs) -> "AdamState":
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            t=0,
            lr=lr,
            **kwargs,
        )

    def advance_epoch(self, epoch: int) -> None:
        if epoch in self.decay_milestones and epoch not in self._decayed:
            self.lr *= self.decay_factor
            self._decayed.add(epoch)


def adam_step(
    params: list[np.ndarray], grads: list[np.ndarray], state: AdamState
) -> tuple[list[np.ndarray], AdamState]:
    """One bias-corrected Adam update at the state's current learning rate."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValidationError("params, grads, and state must have matching lengths")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ValidationError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        if not np.all(np.isfinite(g)):
            raise ValidationError("non-finite gradient")

    state.t += 1
    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    new_params = []
    for i, (p, g) in enumerate(zip(params, grads)):
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g
        m_hat = state.m[i] / bc1
        v_hat = state.v[i] / bc2
        new_params.append(p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps))
    return new_params, state


@dataclass(frozen=True)
class AdapterTrainConfig:
    epochs: int = 15
    batch_size: int = 256
    lr: float = 1e-4
    temperature: float = 0.07
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    decay_factor: float = 0.1
    decay_milestones: tuple[int, ...] | None = None  # None -> 50% and 75% of epochs
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValidationError("adapter epochs must be at least 1")
        if self.batch_size < 2:
            raise ValidationError("adapter batch_size must be at least 2")
        if self.temperature <= 0.0 or self.lr <= 0.0:
            raise ValidationError("temperature and lr must be positive")

    def milestones(self) -> tuple[int, ...]:
        if self.decay_milestones is not None:
            return self.decay_milestones
        return (self.epochs // 2, (3 * self.epochs) // 4)


def train_adapters(
    image_embs: EmbeddingTable,
    text_embs_per_sample: EmbeddingTable,
    cfg: AdapterTrainConfig,
) -> tuple[LinearAdapter, LinearAdapter, list[float]]:
    """Fine-tune both adapters on paired per-sample embeddings.

    ``text_embs_per_sample`` holds one row per sample (its label's text
    embedding), so row i of each table forms the positive pair.  Batches
    are seeded shuffles; the returned history is the size-weighted mean
    batch loss per epoch.  The input tables are never mutated.
    """
    if image_embs.n != text_embs_per_sample.n:
        raise ValidationError(
            f"paired tables must have equal n, got {image_embs.n} and {text_embs_per_sample.n}"
        )
    if image_embs.d != text_embs_per_sample.d:
        raise ValidationError("paired tables must have equal dimension")

    x_img = image_embs.vectors.astype(np.float64)
    x_txt = text_embs_per_sample.vectors.astype(np.float64)
    n, dim = x_img.shape

    image_adapter = LinearAdapter.identity(dim)
    text_adapter = LinearAdapter.identity(dim)
    params = [image_adapter.weight, image_adapter.bias, text_adapter.weight, text_adapter.bias]
    state = AdamState.init(
        params,
        lr=cfg.lr,
        beta1=cfg.beta1,
        beta2=cfg.beta2,
        eps=cfg.eps,
        decay_factor=cfg.decay_factor,
        decay_milestones=cfg.milestones(),
    )
    rng = rng_for(cfg.seed, STREAM_ADAPTER)

    history: list[float] = []
    batch = min(cfg.batch_size, n)
    for epoch in range(cfg.epochs):
        state.advance_epoch(epoch)
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch):
            rows = order[start : start + batch]
            grads = infonce_gradients(
                x_img[rows], x_txt[rows], image_adapter, text_adapter, cfg.temperature
            )
            total += grads.loss * len(rows)
            params, state = adam_step(
                params,
                [grads.image_weight, grads.image_bias, grads.text_weight, grads.text_bias],
                state,
            )
            image_adapter = LinearAdapter(weight=params[0], bias=params[1])
            text_adapter = LinearAdapter(weight=params[2], bias=params[3])
        history.append(total / n)
    return image_adapter, text_adapter, history


_ADP_MAGIC = b"ADP1"


def save_adapter(adapter: LinearAdapter, path) -> None:
    """Checkpoint: magic ADP1 | d (u32 LE) | W row-major float32 | b float32."""
    import struct
    from pathlib import Path

    blob = _ADP_MAGIC + struct.pack("<I", adapter.dim)
    blob += np.ascontiguousarray(adapter.weight, dtype="<f4").tobytes()
    blob += np.ascontiguousarray(adapter.bias, dtype="<f4").tobytes()
    Path(path).write_bytes(blob)


def load_adapter(path) -> LinearAdapter:
    import struct
    from pathlib import Path

    from .core import FileFormatError

    blob = Path(path).read_bytes()
    if len(blob) < 8 or blob[:4] != _ADP_MAGIC:
        raise FileFormatError(f"{path}: bad magic (expected ADP1)")
    (dim,) = struct.unpack("<I", blob[4:8])
    need = 8 + 4 * (dim * dim + dim)
    if len(blob) != need:
        raise FileFormatError(f"{path}: expected {need} bytes for d={dim}, have {len(blob)}")
    w = np.frombuffer(blob[8 : 8 + 4 * dim * dim], dtype="<f4").reshape(dim, dim)
    b = np.frombuffer(blob[8 + 4 * dim * dim :], dtype="<f4")
    return LinearAdapter(weight=w.astype(np.float64), bias=b.astype(np.float64))
