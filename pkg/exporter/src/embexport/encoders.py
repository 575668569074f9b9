"""Encoder backends: a real vision-language model, or a hermetic test encoder.

The model identifier selects the backend:

* ``hash:<dim>`` — a deterministic, dependency-free encoder for tests and
  offline environments.  Images are reduced to a fixed grid of channel
  statistics and projected with a constant seeded matrix; text prompts are
  hashed to seed a Gaussian vector.  Nothing about it is semantically
  meaningful, but it is a pure function of the input bytes, which is what
  interop tests need.
* anything else — treated as a pretrained CLIP-style checkpoint id and
  loaded through ``transformers``; a missing library or checkpoint is a
  fatal error.  Encoders run in eval mode, so repeated inference over the
  same input is deterministic.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np

GRID = 8  # statistics grid for the hash encoder


class EncoderError(RuntimeError):
    """Backend could not be loaded or run."""


class HashEncoder:
    """Deterministic stand-in encoder: embeddings from input bytes only."""

    def __init__(self, dim: int):
        if dim < 2:
            raise EncoderError(f"hash encoder dimension must be >= 2, got {dim}")
        self.dim = dim
        seed = np.random.SeedSequence((0x51AB, dim))
        rng = np.random.Generator(np.random.PCG64(seed))
        self._projection = rng.normal(size=(GRID * GRID * 3, dim)) / np.sqrt(GRID * GRID * 3)

    def encode_image(self, pixels: np.ndarray) -> np.ndarray:
        """pixels: (h, w, 3) uint8 -> (dim,) float32."""
        h, w = pixels.shape[:2]
        ys = np.linspace(0, h, GRID + 1).astype(int)
        xs = np.linspace(0, w, GRID + 1).astype(int)
        cells = np.empty((GRID, GRID, 3))
        for i in range(GRID):
            for j in range(GRID):
                block = pixels[ys[i] : max(ys[i + 1], ys[i] + 1), xs[j] : max(xs[j + 1], xs[j] + 1)]
                cells[i, j] = block.reshape(-1, 3).mean(axis=0)
        flat = (cells.reshape(-1) / 255.0) * 2.0 - 1.0
        return (flat @ self._projection).astype(np.float32)

    def encode_images(self, pixel_list: list[np.ndarray], batch_size: int) -> np.ndarray:
        return np.stack([self.encode_image(p) for p in pixel_list])

    def encode_texts(self, prompts: list[str]) -> np.ndarray:
        rows = []
        for prompt in prompts:
            digest = hashlib.sha256(prompt.encode("utf-8")).digest()
            seed = np.random.SeedSequence(tuple(digest[:16]))
            rng = np.random.Generator(np.random.PCG64(seed))
            rows.append(rng.normal(size=self.dim))
        return np.asarray(rows, dtype=np.float32)


class ClipEncoder:
    """Pretrained CLIP checkpoint via transformers (optional dependency)."""

    def __init__(self, model_id: str):
        try:
            import torch
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:
            raise EncoderError(
                f"model {model_id!r} needs the transformers/torch/pillow extras: {exc}"
            ) from exc
        try:
            self._model = CLIPModel.from_pretrained(model_id)
            self._processor = CLIPProcessor.from_pretrained(model_id)
        except Exception as exc:
            raise EncoderError(f"cannot load model {model_id!r}: {exc}") from exc
        self._model.eval()
        self._torch = torch
        self.dim = int(self._model.config.projection_dim)

    def encode_image(self, pixels: np.ndarray) -> np.ndarray:
        return self.encode_images([pixels], batch_size=1)[0]

    def encode_images(self, pixel_list: list[np.ndarray], batch_size: int) -> np.ndarray:
        from PIL import Image as PILImage

        chunks = []
        with self._torch.no_grad():
            for start in range(0, len(pixel_list), batch_size):
                batch = [PILImage.fromarray(p) for p in pixel_list[start : start + batch_size]]
                inputs = self._processor(images=batch, return_tensors="pt")
                chunks.append(self._model.get_image_features(**inputs).cpu().numpy())
        return np.concatenate(chunks).astype(np.float32)

    def encode_texts(self, prompts: list[str]) -> np.ndarray:
        with self._torch.no_grad():
            inputs = self._processor(text=prompts, return_tensors="pt", padding=True)
            feats = self._model.get_text_features(**inputs)
        return feats.cpu().numpy().astype(np.float32)


def load_encoder(model_id: str):
    if model_id.startswith("hash:"):
        try:
            dim = int(model_id.split(":", 1)[1])
        except ValueError:
            raise EncoderError(f"bad hash encoder id {model_id!r}; use hash:<dim>") from None
        return HashEncoder(dim)
    return ClipEncoder(model_id)


def read_ppm(path: str | Path) -> np.ndarray:
    """Minimal P6 reader (maxval 255) for the hermetic pipeline."""
    blob = Path(path).read_bytes()
    if blob[:2] != b"P6":
        raise ValueError(f"{path}: not a P6 PPM file")
    tokens: list[bytes] = []
    pos = 2
    current = b""
    while len(tokens) < 3 and pos < len(blob):
        byte = blob[pos : pos + 1]
        if byte == b"#":
            while pos < len(blob) and blob[pos : pos + 1] != b"\n":
                pos += 1
            continue
        if byte.isspace():
            if current:
                tokens.append(current)
                current = b""
            pos += 1
            continue
        current += byte
        pos += 1
    width, height, maxval = (int(t) for t in tokens)
    if maxval != 255:
        raise ValueError(f"{path}: unsupported maxval {maxval}")
    need = width * height * 3
    payload = blob[pos : pos + need]
    if len(payload) < need:
        raise ValueError(f"{path}: truncated pixel data")
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)
