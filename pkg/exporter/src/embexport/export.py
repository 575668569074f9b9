"""The export job: image folder + class names -> two EMB1 files.

Image rows follow lexicographic filename order, so re-running a job over
the same folder is idempotent.  Unreadable images are skipped with a
warning and listed in a ``<out-img>.skipped`` sidecar; text rows are the
encoder's output for ``template.format(label=name)``, one per class name.
Embeddings are written unnormalized — the consumer normalizes inside its
cosine, so raw and adapter-transformed paths share one route.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .emb1 import KIND_IMAGE, KIND_TEXT, write_emb1
from .encoders import EncoderError, load_encoder, read_ppm

DEFAULT_MODEL = "openai/clip-vit-base-patch32"
DEFAULT_TEMPLATE = "a photo of a {label}"


@dataclass
class ExportJob:
    image_dir: Path
    label_file: Path
    out_img: Path
    out_txt: Path
    model_id: str = DEFAULT_MODEL
    template: str = DEFAULT_TEMPLATE
    batch_size: int = 32

    def __post_init__(self):
        self.image_dir = Path(self.image_dir)
        self.label_file = Path(self.label_file)
        self.out_img = Path(self.out_img)
        self.out_txt = Path(self.out_txt)
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")


@dataclass
class ExportResult:
    image_files: list[str]
    skipped: list[str]
    class_names: list[str]
    image_rows: np.ndarray
    text_rows: np.ndarray
    cosines: np.ndarray | None = None  # filled when check labels are given


def _load_labels(path: Path) -> list[str]:
    names = [line.strip() for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
    if len(names) < 2:
        raise ValueError(f"{path}: need at least 2 class names, found {len(names)}")
    return names


def run_export(job: ExportJob, check_labels: Path | None = None) -> ExportResult:
    encoder = load_encoder(job.model_id)
    class_names = _load_labels(job.label_file)

    files = sorted(p for p in job.image_dir.iterdir() if p.suffix.lower() == ".ppm")
    if not files:
        raise EncoderError(f"no .ppm images under {job.image_dir}")

    pixel_list: list[np.ndarray] = []
    kept: list[str] = []
    skipped: list[str] = []
    for path in files:
        try:
            pixels = read_ppm(path)
        except (ValueError, OSError) as exc:
            print(f"warning: skipping {path.name}: {exc}", file=sys.stderr)
            skipped.append(path.name)
            continue
        pixel_list.append(pixels)
        kept.append(path.name)
    if not pixel_list:
        raise EncoderError(f"every image under {job.image_dir} was unreadable")

    image_rows = encoder.encode_images(pixel_list, job.batch_size)
    prompts = [job.template.format(label=name) for name in class_names]
    text_rows = encoder.encode_texts(prompts)
    if text_rows.shape[1] != image_rows.shape[1]:
        raise EncoderError(
            f"encoder emitted image dim {image_rows.shape[1]} but text dim {text_rows.shape[1]}"
        )

    write_emb1(image_rows, KIND_IMAGE, job.out_img)
    write_emb1(text_rows, KIND_TEXT, job.out_txt)
    sidecar = Path(str(job.out_img) + ".skipped")
    if skipped:
        sidecar.write_text("\n".join(skipped) + "\n", encoding="utf-8")
    elif sidecar.exists():
        sidecar.unlink()

    cosines = None
    if check_labels is not None:
        labels = [int(line) for line in Path(check_labels).read_text().split()]
        if len(labels) != len(kept):
            raise ValueError(
                f"{check_labels}: {len(labels)} labels for {len(kept)} exported images"
            )
        img64 = image_rows.astype(np.float64)
        txt64 = text_rows.astype(np.float64)
        paired = txt64[labels]
        cosines = np.einsum("ij,ij->i", img64, paired) / (
            np.linalg.norm(img64, axis=1) * np.linalg.norm(paired, axis=1)
        )
    return ExportResult(kept, skipped, class_names, image_rows, text_rows, cosines)
