"""Drive the complete file-based workflow through the command-line tool.

Everything the library does is reachable through files: EMB1 embeddings in,
score CSVs, selection manifests, and augmented PPMs out.  This script
builds a small dataset, then shells through score -> select -> augment ->
train-adapter -> simulate -> bench, printing each command it runs.
"""

import subprocess
import sys
from pathlib import Path

import numpy as np

from densaug import Image, SyntheticSpec, synth_dataset
from densaug.augment import write_ppm
from densaug.core import rng_for
from densaug.fileio import write_embeddings, write_labels

work = Path("demo_output/cli")
work.mkdir(parents=True, exist_ok=True)

spec = SyntheticSpec(n=60, clusters=3, noise_ratio=0.1, seed=5)
features, labels, image_embs, text_embs = synth_dataset(spec)
write_embeddings(image_embs, work / "img.emb1")
write_embeddings(text_embs, work / "txt.emb1")
from densaug.core import EmbeddingTable

write_embeddings(
    EmbeddingTable(features.vectors.astype(np.float32), "image"), work / "features.emb1"
)
write_labels(labels, work / "labels.txt")

img_dir = work / "images"
img_dir.mkdir(exist_ok=True)
rng = rng_for(5, 60)
for i in range(spec.n):
    write_ppm(Image(rng.integers(0, 256, size=(16, 16, 3)).astype(np.uint8)), img_dir / f"{i}.ppm")

(work / "run.cfg").write_text(
    "selection_ratio=0.25\nknn_k=5\nhnsw.M=8\nhnsw.ef_construction=48\nhnsw.ef_search=48\n"
    "adapter.epochs=3\nadapter.batch_size=16\nepochs=3\nsynth.n=200\n"
)


def run(*args):
    cmd = [sys.executable, "-m", "densaug", *args]
    print("$", " ".join(str(a) for a in cmd[2:]))
    subprocess.run(cmd, check=True)


run("ingest", "--embeddings", work / "img.emb1", "--labels", work / "labels.txt")
run(
    "score", "--features", work / "features.emb1", "--image-embeddings", work / "img.emb1",
    "--text-embeddings", work / "txt.emb1", "--labels", work / "labels.txt",
    "--config", work / "run.cfg", "--seed", "5", "--out", work / "scores.csv",
)
run(
    "select", "--scores", work / "scores.csv", "--config", work / "run.cfg",
    "--seed", "5", "--out", work / "manifest.txt",
)
run(
    "augment", "--images", img_dir, "--manifest", work / "manifest.txt",
    "--seed", "5", "--out", work / "augmented",
)
run(
    "train-adapter", "--image-embeddings", work / "img.emb1",
    "--text-embeddings", work / "txt.emb1", "--labels", work / "labels.txt",
    "--config", work / "run.cfg", "--seed", "5", "--out", work / "adapters",
)
run("simulate", "--config", work / "run.cfg", "--seed", "5", "--out", work / "sim")
run(
    "bench", "--sizes", "500,2000", "--dim", "8", "--queries", "25",
    "--seed", "5", "--out", work / "bench.csv",
)
print(f"\nall outputs under {work}/")
