"""Command-line entry points.

Subcommands: ingest, score, select, augment, train-adapter, simulate, bench.
Every subcommand accepts --config, --seed, and --out.  Exit codes: 0 on
success, 1 on validation errors, 2 on I/O or file-format errors.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import adapter as adapter_mod
from . import fileio
from .ann import HnswIndex
from .augment import read_ppm, write_ppm, augment_selected
from .config import RunConfig, parse_config
from .core import FeatureStore, FileFormatError, ManifestEntry, SelectionManifest, ValidationError
from .pipeline import bench_index, run_simulation, write_bench_csv, write_reports_csv
from .scoring import (
    consistency_scores,
    density_scores,
    make_score_table,
    min_max_normalize,
    read_scores_csv,
    select,
    write_scores_csv,
)
from .synthetic import SyntheticSpec


def _load_config(args) -> RunConfig:
    cfg = parse_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        from dataclasses import replace

        cfg = replace(cfg, seed=args.seed)
    return cfg


def _features_from_emb(path: str) -> FeatureStore:
    table = fileio.read_embeddings(path)
    return FeatureStore(vectors=table.vectors.astype(np.float64))


def cmd_ingest(args) -> int:
    checked = 0
    if args.embeddings:
        for path in args.embeddings:
            table = fileio.read_embeddings(path)
            print(f"embeddings {path}: kind={table.kind} n={table.n} d={table.d}")
            checked += 1
    if args.labels:
        labels = fileio.read_labels(args.labels)
        print(f"labels {args.labels}: n={labels.n} classes={labels.num_classes}")
        checked += 1
    if args.images:
        image_dir = Path(args.images)
        files = sorted(image_dir.glob("*.ppm"))
        if not files:
            raise FileFormatError(f"no .ppm images under {image_dir}")
        for f in files:
            read_ppm(f)
        print(f"images {image_dir}: {len(files)} valid PPM files")
        checked += 1
    if checked == 0:
        raise ValidationError("ingest: nothing to validate (pass --embeddings/--labels/--images)")
    if args.out:
        Path(args.out).write_text(f"validated {checked} input(s)\n", encoding="utf-8")
    return 0


def cmd_score(args) -> int:
    cfg = _load_config(args)
    features = _features_from_emb(args.features)
    image_embs = fileio.read_embeddings(args.image_embeddings)
    text_embs = fileio.read_embeddings(args.text_embeddings)
    labels = fileio.read_labels(args.labels, num_classes=text_embs.n)
    if args.image_adapter:
        image_embs = adapter_mod.apply_adapter(adapter_mod.load_adapter(args.image_adapter), image_embs)
    if args.text_adapter:
        text_embs = adapter_mod.apply_adapter(adapter_mod.load_adapter(args.text_adapter), text_embs)

    index = HnswIndex(features.d, m=cfg.hnsw_m, ef_construction=cfg.hnsw_ef_construction, seed=cfg.seed)
    for i in range(features.n):
        index.insert(i, features.vectors[i])
    rho = density_scores(index, features, cfg.knn_k, cfg.hnsw_ef_search)
    con = consistency_scores(image_embs, text_embs, labels)
    table = make_score_table(rho, min_max_normalize(con))
    write_scores_csv(table, args.out)
    print(f"wrote scores for {table.n} samples to {args.out}")
    return 0


def cmd_select(args) -> int:
    cfg = _load_config(args)
    cols = read_scores_csv(args.scores)
    p_sel = cols["p_sel"]
    n = len(p_sel)
    budget = args.budget if args.budget else max(1, min(n, int(np.floor(cfg.selection_ratio * n + 0.5))))
    chosen = select(p_sel, budget, cfg.policy, seed=cfg.seed)
    manifest = SelectionManifest(
        epoch=args.epoch,
        budget=budget,
        seed=cfg.seed,
        entries=tuple(ManifestEntry(i, float(p_sel[i])) for i in chosen),
    )
    fileio.write_manifest(manifest, args.out)
    print(f"selected {len(chosen)}/{n} samples into {args.out}")
    return 0


def cmd_augment(args) -> int:
    cfg = _load_config(args)
    manifest = fileio.read_manifest(args.manifest)
    image_dir = Path(args.images)
    images = {}
    for entry in manifest.entries:
        path = image_dir / f"{entry.sample_id}.ppm"
        if not path.exists():
            raise ValidationError(f"missing image for selected sample: {path}")
        images[entry.sample_id] = read_ppm(path)
    augmented, manifest = augment_selected(images, manifest, cfg.seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for sample_id, image in augmented.items():
        write_ppm(image, out_dir / f"{sample_id}.ppm")
    fileio.write_manifest(manifest, out_dir / "manifest.txt")
    print(f"augmented {len(augmented)} images into {out_dir}")
    return 0


def cmd_train_adapter(args) -> int:
    cfg = _load_config(args)
    image_embs = fileio.read_embeddings(args.image_embeddings)
    text_embs = fileio.read_embeddings(args.text_embeddings)
    labels = fileio.read_labels(args.labels, num_classes=text_embs.n)
    if image_embs.n != labels.n:
        raise ValidationError(f"{image_embs.n} image embeddings but {labels.n} labels")
    per_sample_text = type(text_embs)(
        vectors=text_embs.vectors[labels.labels], kind="text"
    )
    train_cfg = adapter_mod.AdapterTrainConfig(
        epochs=cfg.adapter_epochs,
        batch_size=cfg.adapter_batch_size,
        lr=cfg.adapter_lr,
        temperature=cfg.adapter_temperature,
        beta1=cfg.adapter_beta1,
        beta2=cfg.adapter_beta2,
        eps=cfg.adapter_eps,
        decay_factor=cfg.adapter_decay_factor,
        decay_milestones=cfg.adapter_decay_milestones,
        seed=cfg.seed,
    )
    image_adapter, text_adapter, history = adapter_mod.train_adapters(
        image_embs, per_sample_text, train_cfg
    )
    prefix = Path(args.out)
    adapter_mod.save_adapter(image_adapter, prefix.with_suffix(".image.adp1"))
    adapter_mod.save_adapter(text_adapter, prefix.with_suffix(".text.adp1"))
    loss_path = prefix.with_suffix(".loss.csv")
    loss_path.write_text(
        "epoch,mean_loss\n" + "\n".join(f"{i},{v:.9g}" for i, v in enumerate(history)) + "\n",
        encoding="utf-8",
    )
    print(f"trained adapters for {train_cfg.epochs} epochs; final loss {history[-1]:.6f}")
    return 0


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    spec = SyntheticSpec(
        n=cfg.synth_n,
        d=cfg.synth_d,
        clusters=cfg.synth_clusters,
        cluster_std=cfg.synth_cluster_std,
        outlier_fraction=cfg.synth_outlier_fraction,
        noise_ratio=cfg.synth_noise_ratio,
        drift_std=cfg.synth_drift_std,
        seed=cfg.seed,
    )
    result = run_simulation(spec, cfg)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_reports_csv(result.reports, out_dir / "reports.csv", timings=args.timings == "wall")
    for manifest in result.manifests:
        fileio.write_manifest(manifest, out_dir / f"manifest_epoch{manifest.epoch}.txt")
    (out_dir / "summary.txt").write_text(
        "\n".join(result.summary.lines()) + "\n", encoding="utf-8"
    )
    print(
        f"simulated {cfg.epochs} epochs over n={spec.n}: bottom-decile mass "
        f"{result.summary.first_bottom_decile_mass} -> {result.summary.final_bottom_decile_mass}"
    )
    return 0


def cmd_bench(args) -> int:
    cfg = _load_config(args)
    sizes = [int(s) for s in args.sizes.split(",")]
    rows = bench_index(sizes, cfg, dim=args.dim, n_queries=args.queries, seed=cfg.seed)
    write_bench_csv(rows, args.out)
    for row in rows:
        print(f"n={row.n}: {row.mean_distance_evaluations:.1f} evals/query, {row.ms_per_query:.3f} ms/query")
    if len(rows) >= 2:
        ratio = rows[-1].mean_distance_evaluations / rows[0].mean_distance_evaluations
        print(f"evaluation-count ratio {rows[-1].n}/{rows[0].n}: {ratio:.2f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="densaug",
        description="Density + consistency sample selection with single-op augmentation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True, out_help="output path"):
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--seed", type=int, default=None, help="overrides config seed")
        p.add_argument("--out", required=out_required, help=out_help)

    p = sub.add_parser("ingest", help="validate input files")
    p.add_argument("--embeddings", action="append", help="EMB1 file (repeatable)")
    p.add_argument("--labels", help="text label file, one class index per line")
    p.add_argument("--images", help="directory of P6 PPM images")
    common(p, out_required=False, out_help="optional validation report path")
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("score", help="compute density/consistency/joint scores")
    p.add_argument("--features", required=True, help="EMB1 feature file")
    p.add_argument("--image-embeddings", required=True)
    p.add_argument("--text-embeddings", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--image-adapter", help="optional ADP1 checkpoint")
    p.add_argument("--text-adapter", help="optional ADP1 checkpoint")
    common(p, out_help="score CSV path")
    p.set_defaults(fn=cmd_score)

    p = sub.add_parser("select", help="spend a budget over a score CSV")
    p.add_argument("--scores", required=True, help="CSV from the score command")
    p.add_argument("--budget", type=int, default=None, help="override ratio-derived budget")
    p.add_argument("--epoch", type=int, default=0, help="epoch recorded in the manifest")
    common(p, out_help="manifest path")
    p.set_defaults(fn=cmd_select)

    p = sub.add_parser("augment", help="augment the images a manifest selects")
    p.add_argument("--images", required=True, help="directory of <id>.ppm images")
    p.add_argument("--manifest", required=True)
    common(p, out_help="output directory")
    p.set_defaults(fn=cmd_augment)

    p = sub.add_parser("train-adapter", help="fine-tune linear adapters with InfoNCE")
    p.add_argument("--image-embeddings", required=True)
    p.add_argument("--text-embeddings", required=True)
    p.add_argument("--labels", required=True)
    common(p, out_help="checkpoint prefix (writes .image.adp1/.text.adp1/.loss.csv)")
    p.set_defaults(fn=cmd_train_adapter)

    p = sub.add_parser("simulate", help="run the epoch loop on synthetic data")
    p.add_argument(
        "--timings",
        choices=["none", "wall"],
        default="none",
        help="wall writes measured phase times into reports.csv (breaks byte-determinism)",
    )
    common(p, out_help="output directory")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("bench", help="measure query work across index sizes")
    p.add_argument("--sizes", required=True, help="comma-separated ascending sizes")
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--queries", type=int, default=100)
    common(p, out_help="bench CSV path")
    p.set_defaults(fn=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (FileFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
