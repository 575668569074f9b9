"""Synthetic data, corruptions, the epoch loop, the bench, and the CLI."""

from dataclasses import replace

import numpy as np
import pytest

from densaug.augment import Image
from densaug.cli import main as cli_main
from densaug.config import RunConfig
from densaug.core import (
    EmbeddingTable,
    LabelTable,
    ValidationError,
    rng_for,
)
from densaug.corruptions import CORRUPTION_KINDS, corrupt, occlusion_rect
from densaug.fileio import read_manifest, write_embeddings, write_labels
from densaug.pipeline import (
    bench_index,
    make_state,
    run_epoch,
    run_simulation,
    write_reports_csv,
)
from densaug.scoring import consistency_scores
from densaug.synthetic import SyntheticSpec, synth_dataset

# small, fast config for loop tests; index knobs shrunk from the documented
# defaults because these graphs hold only a few hundred points
FAST = RunConfig(epochs=3, knn_k=10, hnsw_m=8, hnsw_ef_construction=64, hnsw_ef_search=64)


# ---- synthetic datasets -------------------------------------------------------


def test_spec_validation():
    with pytest.raises(ValidationError):
        SyntheticSpec(noise_ratio=1.0)
    with pytest.raises(ValidationError):
        SyntheticSpec(clusters=1)
    with pytest.raises(ValidationError):
        SyntheticSpec(outlier_fraction=-0.1)


def test_clean_dataset_has_no_noise_and_argmax_property():
    spec = SyntheticSpec(n=400, noise_ratio=0.0, seed=3)
    _, labels, img, txt = synth_dataset(spec)
    assert labels.noise_mask is not None and not labels.noise_mask.any()
    sims = img.vectors.astype(np.float64) @ txt.vectors.astype(np.float64).T
    assert np.array_equal(np.argmax(sims, axis=1), labels.labels)


def test_noise_flips_exact_count_and_targets():
    clean_spec = SyntheticSpec(n=1000, noise_ratio=0.0, seed=9)
    noisy_spec = SyntheticSpec(n=1000, noise_ratio=0.2, seed=9)
    _, clean_labels, _, _ = synth_dataset(clean_spec)
    _, noisy_labels, _, _ = synth_dataset(noisy_spec)
    true = clean_labels.labels  # flips draw after labels, so these match
    flipped = noisy_labels.noise_mask
    assert flipped.sum() == 200
    assert np.array_equal(noisy_labels.labels != true, flipped)
    assert np.all(noisy_labels.labels[flipped] != true[flipped])


def test_flipped_samples_have_lower_consistency():
    spec = SyntheticSpec(n=800, noise_ratio=0.2, seed=4)
    _, labels, img, txt = synth_dataset(spec)
    con = consistency_scores(img, txt, labels)
    flipped = labels.noise_mask
    assert con[flipped].mean() < con[~flipped].mean()
    assert con[flipped].mean() < 0.3
    assert con[~flipped].mean() > 0.9


def test_outliers_sit_far_from_every_center():
    with_out = SyntheticSpec(n=500, outlier_fraction=0.05, seed=5)
    without = SyntheticSpec(n=500, outlier_fraction=0.0, seed=5)
    features, labels, _, _ = synth_dataset(with_out)
    clean_features, clean_labels, _, _ = synth_dataset(without)
    moved = np.any(features.vectors != clean_features.vectors, axis=1)
    assert moved.sum() == 25  # floor(0.05 * 500)
    # class centers estimated from the outlier-free twin
    centers = np.stack(
        [clean_features.vectors[clean_labels.labels == c].mean(axis=0) for c in range(5)]
    )
    for i in np.nonzero(moved)[0]:
        dists = np.linalg.norm(centers - features.vectors[i], axis=1)
        assert dists.min() > 6.0 * with_out.cluster_std


def test_synth_deterministic():
    a = synth_dataset(SyntheticSpec(seed=7))
    b = synth_dataset(SyntheticSpec(seed=7))
    assert np.array_equal(a[0].vectors, b[0].vectors)
    assert np.array_equal(a[2].vectors, b[2].vectors)


# ---- corruptions ------------------------------------------------------------------


def _gray(value=128, h=32, w=32):
    return Image(np.full((h, w, 3), value, np.uint8))


@pytest.mark.parametrize("kind", CORRUPTION_KINDS)
def test_severity_zero_is_identity(kind):
    img = Image(rng_for(60, 1).integers(0, 256, size=(16, 16, 3)).astype(np.uint8))
    out = corrupt(img, kind, 0.0, rng_for(60, 2))
    assert out.pixels.tobytes() == img.pixels.tobytes()


def test_corrupt_validates_inputs():
    with pytest.raises(ValidationError):
        corrupt(_gray(), "salt", 0.5, rng_for(0))
    with pytest.raises(ValidationError):
        corrupt(_gray(), "fog", 1.5, rng_for(0))


def test_occlusion_rectangle_contract():
    img = Image(rng_for(61, 1).integers(0, 256, size=(40, 60, 3)).astype(np.uint8))
    severity = 0.8
    out = corrupt(img, "occlusion", severity, rng_for(62, 5))
    x0, y0, w, h = occlusion_rect(img.width, img.height, severity, rng_for(62, 5))
    assert np.all(out.pixels[y0 : y0 + h, x0 : x0 + w] == 128)
    mask = np.ones((img.height, img.width), bool)
    mask[y0 : y0 + h, x0 : x0 + w] = False
    assert np.array_equal(out.pixels[mask], img.pixels[mask])
    assert abs(w * h - 0.25 * severity * img.width * img.height) < 0.1 * img.width * img.height


def test_gaussian_noise_std_matches_parameter():
    img = _gray(128, 64, 64)
    severity = 0.3
    out = corrupt(img, "gaussian_noise", severity, rng_for(63, 1))
    delta = out.pixels.astype(np.int32) - img.pixels.astype(np.int32)
    assert abs(delta.std() - 50 * severity) < 0.1 * (50 * severity)


def test_resolution_produces_constant_blocks():
    img = Image(rng_for(64, 1).integers(0, 256, size=(16, 16, 3)).astype(np.uint8))
    out = corrupt(img, "resolution", 0.34, rng_for(64, 2))  # factor 1+round(1.02)=2
    blocks = out.pixels.reshape(8, 2, 8, 2, 3)
    assert np.all(blocks == blocks[:, :1, :, :1, :])
    assert not np.array_equal(out.pixels, img.pixels)


def test_motion_blur_preserves_row_structure():
    rng = rng_for(65, 1)
    row = rng.integers(0, 256, size=(1, 48, 3)).astype(np.uint8)
    img = Image(np.repeat(row, 24, axis=0))
    out = corrupt(img, "motion_blur", 1.0, rng_for(65, 2))
    assert np.all(out.pixels == out.pixels[:1])  # rows stay identical
    assert not np.array_equal(out.pixels, img.pixels)
    const = corrupt(_gray(90), "motion_blur", 1.0, rng_for(65, 3))
    assert np.all(const.pixels == 90)


def test_fog_blends_toward_white():
    img = _gray(50, 24, 24)
    out = corrupt(img, "fog", 1.0, rng_for(66, 1))
    assert np.all(out.pixels >= img.pixels)
    assert out.pixels.max() > 50


# ---- epoch loop --------------------------------------------------------------------


def test_full_ratio_selects_everything():
    spec = SyntheticSpec(n=300, seed=11)
    cfg = replace(FAST, selection_ratio=1.0, epochs=2, seed=11)
    result = run_simulation(spec, cfg)
    for manifest in result.manifests:
        assert len(manifest.entries) == 300


def test_full_annealing_selects_everything():
    spec = SyntheticSpec(n=250, seed=12)
    cfg = replace(FAST, selection_ratio=0.3, epochs=3, anneal_epochs=3, seed=12)
    result = run_simulation(spec, cfg)
    for manifest in result.manifests:
        assert len(manifest.entries) == 250


def test_anneal_window_only_at_end():
    spec = SyntheticSpec(n=200, seed=13)
    cfg = replace(FAST, selection_ratio=0.4, epochs=3, anneal_epochs=1, seed=13)
    result = run_simulation(spec, cfg)
    sizes = [len(m.entries) for m in result.manifests]
    assert sizes == [80, 80, 200]


def test_budget_rounds_half_up():
    spec = SyntheticSpec(n=205, seed=14)
    cfg = replace(FAST, selection_ratio=0.5, epochs=1, seed=14)
    result = run_simulation(spec, cfg)
    assert len(result.manifests[0].entries) == 103  # floor(102.5 + 0.5)


def test_simulation_deterministic_reports_and_manifests(tmp_path):
    spec = SyntheticSpec(n=250, noise_ratio=0.1, seed=15)
    cfg = replace(FAST, seed=15)
    a = run_simulation(spec, cfg)
    b = run_simulation(spec, cfg)
    assert [m.entries for m in a.manifests] == [m.entries for m in b.manifests]
    pa, pb = tmp_path / "a.csv", tmp_path / "b.csv"
    write_reports_csv(a.reports, pa)
    write_reports_csv(b.reports, pb)
    assert pa.read_bytes() == pb.read_bytes()


def test_static_features_are_a_fixed_point():
    spec = SyntheticSpec(n=220, drift_std=0.0, seed=16)
    cfg = replace(FAST, augment_enabled=False, epochs=3, seed=16)
    result = run_simulation(spec, cfg)
    first = result.reports[0]
    for report in result.reports[1:]:
        assert report.histogram == first.histogram
        assert report.mean_p_sel == first.mean_p_sel
        assert report.update_ms <= first.update_ms * 10  # no rebuild storms


def test_histogram_masses_sum_to_n():
    spec = SyntheticSpec(n=310, noise_ratio=0.15, seed=17)
    result = run_simulation(spec, replace(FAST, seed=17))
    for report in result.reports:
        assert sum(report.histogram) == 310
        assert 0.0 <= report.noise_selection_rate <= 1.0


def test_manifest_scores_non_increasing_under_topk():
    spec = SyntheticSpec(n=200, seed=18)
    result = run_simulation(spec, replace(FAST, seed=18))
    for manifest in result.manifests:
        scores = [e.p_sel for e in manifest.entries]
        assert all(a >= b for a, b in zip(scores, scores[1:]))


def test_run_epoch_requires_pcon():
    spec = SyntheticSpec(n=100, seed=19)
    state = make_state(spec, FAST)
    state.p_con = state.p_con[:10]
    with pytest.raises(ValidationError, match="p_con"):
        run_epoch(state, FAST)


def test_rebuild_mode_matches_update_mode_approximately():
    spec = SyntheticSpec(n=150, seed=20)
    cfg = replace(FAST, epochs=3, seed=20)
    upd = run_simulation(spec, cfg)
    reb = run_simulation(spec, replace(cfg, hnsw_rebuild_each_epoch=True))
    # same dataset and drift stream; selections may differ slightly through
    # approximate density, but the budget and score ranges must agree
    for a, b in zip(upd.reports, reb.reports):
        assert a.selected == b.selected
        assert abs(a.mean_p_sel - b.mean_p_sel) < 0.1


# ---- bench ----------------------------------------------------------------------


def test_bench_rows_and_determinism():
    cfg = replace(FAST, hnsw_ef_search=32, knn_k=5)
    rows_a = bench_index([400, 1600], cfg, dim=8, n_queries=40, seed=21)
    rows_b = bench_index([400, 1600], cfg, dim=8, n_queries=40, seed=21)
    assert [r.n for r in rows_a] == [400, 1600]
    assert [r.mean_distance_evaluations for r in rows_a] == [
        r.mean_distance_evaluations for r in rows_b
    ]
    assert rows_a[1].mean_distance_evaluations < 4 * rows_a[0].mean_distance_evaluations
    with pytest.raises(ValidationError):
        bench_index([1600, 400], cfg)


# ---- CLI -----------------------------------------------------------------------------


@pytest.fixture
def small_inputs(tmp_path):
    rng = rng_for(77, 7000)
    n, c, d = 40, 3, 6
    protos = np.linalg.qr(rng.normal(size=(d, c)))[0].T
    labels = rng.integers(0, c, size=n)
    img = protos[labels] + 0.1 * rng.normal(size=(n, d))
    features = rng.normal(size=(n, d))
    write_embeddings(EmbeddingTable(img.astype(np.float32), "image"), tmp_path / "img.emb1")
    write_embeddings(EmbeddingTable(protos.astype(np.float32), "text"), tmp_path / "txt.emb1")
    write_embeddings(
        EmbeddingTable(features.astype(np.float32), "image"), tmp_path / "features.emb1"
    )
    write_labels(LabelTable(labels=labels, num_classes=c), tmp_path / "labels.txt")
    return tmp_path


def test_cli_ingest_and_errors(tmp_path, small_inputs, capsys):
    code = cli_main(
        ["ingest", "--embeddings", str(small_inputs / "img.emb1"),
         "--labels", str(small_inputs / "labels.txt")]
    )
    assert code == 0
    out = capsys.readouterr().out
    assert "kind=image" in out
    bad = tmp_path / "bad.emb1"
    bad.write_bytes(b"XXXX")
    assert cli_main(["ingest", "--embeddings", str(bad)]) == 2
    assert cli_main(["ingest"]) == 1


def test_cli_score_select_augment_chain(small_inputs, tmp_path):
    scores = tmp_path / "scores.csv"
    code = cli_main(
        ["score",
         "--features", str(small_inputs / "features.emb1"),
         "--image-embeddings", str(small_inputs / "img.emb1"),
         "--text-embeddings", str(small_inputs / "txt.emb1"),
         "--labels", str(small_inputs / "labels.txt"),
         "--seed", "3", "--out", str(scores)]
    )
    assert code == 0
    assert scores.read_text().splitlines()[0] == "id,rho_raw,p_rho,p_con,p_sel"

    manifest_path = tmp_path / "manifest.txt"
    code = cli_main(
        ["select", "--scores", str(scores), "--budget", "10",
         "--seed", "3", "--out", str(manifest_path)]
    )
    assert code == 0
    manifest = read_manifest(manifest_path)
    assert len(manifest.entries) == 10

    from densaug.augment import write_ppm

    img_dir = tmp_path / "imgs"
    img_dir.mkdir()
    rng = rng_for(78, 7000)
    for entry in manifest.entries:
        write_ppm(
            Image(rng.integers(0, 256, size=(8, 8, 3)).astype(np.uint8)),
            img_dir / f"{entry.sample_id}.ppm",
        )
    out_dir = tmp_path / "aug"
    code = cli_main(
        ["augment", "--images", str(img_dir), "--manifest", str(manifest_path),
         "--seed", "3", "--out", str(out_dir)]
    )
    assert code == 0
    augmented = read_manifest(out_dir / "manifest.txt")
    assert all(e.op is not None for e in augmented.entries)
    assert len(list(out_dir.glob("*.ppm"))) == 10


def test_cli_train_adapter(small_inputs, tmp_path):
    prefix = tmp_path / "ckpt"
    cfg = tmp_path / "run.cfg"
    cfg.write_text("adapter.epochs=2\nadapter.batch_size=16\n")
    code = cli_main(
        ["train-adapter",
         "--image-embeddings", str(small_inputs / "img.emb1"),
         "--text-embeddings", str(small_inputs / "txt.emb1"),
         "--labels", str(small_inputs / "labels.txt"),
         "--config", str(cfg), "--seed", "4", "--out", str(prefix)]
    )
    assert code == 0
    assert (tmp_path / "ckpt.image.adp1").exists()
    assert (tmp_path / "ckpt.text.adp1").exists()
    loss_lines = (tmp_path / "ckpt.loss.csv").read_text().splitlines()
    assert loss_lines[0] == "epoch,mean_loss"
    assert len(loss_lines) == 3


def test_cli_simulate_byte_deterministic(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        "epochs=2\nsynth.n=150\nhnsw.M=8\nhnsw.ef_construction=48\nhnsw.ef_search=48\n"
    )
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert cli_main(["simulate", "--config", str(cfg), "--seed", "9", "--out", str(out_a)]) == 0
    assert cli_main(["simulate", "--config", str(cfg), "--seed", "9", "--out", str(out_b)]) == 0
    for name in ["reports.csv", "summary.txt", "manifest_epoch0.txt", "manifest_epoch1.txt"]:
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()


def test_cli_bench_writes_csv(tmp_path):
    out = tmp_path / "bench.csv"
    code = cli_main(
        ["bench", "--sizes", "200,400", "--dim", "6", "--queries", "15",
         "--seed", "2", "--out", str(out)]
    )
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "n,mean_distance_evaluations,ms_per_query"
    assert len(lines) == 3


def test_cli_bad_config_exit_code(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("bogus_key=1\n")
    out = tmp_path / "sim"
    assert cli_main(["simulate", "--config", str(cfg), "--out", str(out)]) == 1
