"""Density, Min-Max, consistency, joint scores, and budgeted selection."""

import numpy as np
import pytest

from densaug.ann import HnswIndex
from densaug.core import EmbeddingTable, FeatureStore, LabelTable, ValidationError, rng_for
from densaug.scoring import (
    SelectionPolicy,
    consistency_scores,
    density_scores,
    density_scores_exact,
    joint_scores,
    make_score_table,
    min_max_normalize,
    read_scores_csv,
    select,
    write_scores_csv,
)


def _indexed(features: FeatureStore, m=16, ef_construction=200, seed=0) -> HnswIndex:
    index = HnswIndex(dim=features.d, m=m, ef_construction=ef_construction, seed=seed)
    for i in range(features.n):
        index.insert(i, features.vectors[i])
    return index


# ---- density ------------------------------------------------------------------


def test_density_all_identical_points_is_zero():
    fs = FeatureStore(np.ones((6, 3)))
    rho = density_scores(_indexed(fs, m=4, ef_construction=8), fs, 3, ef_search=8)
    assert np.array_equal(rho, np.zeros(6))


def test_density_two_points_symmetric():
    fs = FeatureStore(np.array([[0.0, 0.0], [3.0, 4.0]]))
    rho = density_scores(_indexed(fs, m=4, ef_construction=8), fs, 1, ef_search=4)
    assert np.array_equal(rho, np.array([5.0, 5.0]))


def test_density_one_dimensional_fixture_exact():
    fs = FeatureStore(np.array([[0.0], [1.0], [2.0], [3.0], [10.0]]))
    rho = density_scores(_indexed(fs, m=4, ef_construction=16), fs, 2, ef_search=8)
    assert rho[4] == 7.5
    assert rho[1] == 1.0
    assert rho[0] == 1.5  # neighbors 1 and 2
    assert np.array_equal(rho, density_scores_exact(fs, 2))


def test_density_rejects_bad_k():
    fs = FeatureStore(np.zeros((4, 2)))
    index = _indexed(fs, m=4, ef_construction=8)
    with pytest.raises(ValidationError):
        density_scores(index, fs, 4)
    with pytest.raises(ValidationError):
        density_scores(index, fs, 0)


def test_density_matches_oracle_exactly_at_full_recall():
    rng = rng_for(20, 100)
    fs = FeatureStore(rng.normal(size=(500, 8)))
    index = _indexed(fs, m=16, ef_construction=200, seed=20)
    rho = density_scores(index, fs, 10, ef_search=fs.n)
    assert np.array_equal(rho, density_scores_exact(fs, 10))


def test_density_scale_covariance():
    rng = rng_for(21, 100)
    base = rng.normal(size=(120, 6))
    fs1 = FeatureStore(base)
    fs2 = FeatureStore(base * 3.0)
    rho1 = density_scores(_indexed(fs1, seed=21), fs1, 5, ef_search=fs1.n)
    rho2 = density_scores(_indexed(fs2, seed=21), fs2, 5, ef_search=fs2.n)
    assert np.allclose(rho2, 3.0 * rho1, rtol=1e-12)
    p1, p2 = min_max_normalize(rho1), min_max_normalize(rho2)
    assert np.allclose(p1, p2, atol=1e-12)
    assert select(p1, 30) == select(p2, 30)


# ---- min-max --------------------------------------------------------------------


def test_min_max_basic():
    assert np.array_equal(min_max_normalize([0.0, 5.0, 10.0]), [0.0, 0.5, 1.0])


def test_min_max_constant_maps_to_ones():
    assert np.array_equal(min_max_normalize([4.2, 4.2, 4.2]), [1.0, 1.0, 1.0])


def test_min_max_single_element():
    assert np.array_equal(min_max_normalize([13.0]), [1.0])


def test_min_max_endpoints_exact():
    rng = rng_for(22, 100)
    s = rng.normal(size=100)
    out = min_max_normalize(s)
    assert out[np.argmin(s)] == 0.0
    assert out[np.argmax(s)] == 1.0
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_min_max_rejects_non_finite():
    with pytest.raises(ValidationError):
        min_max_normalize([1.0, np.inf])


# ---- consistency ------------------------------------------------------------------


def _tables(img_rows, txt_rows, labels):
    return (
        EmbeddingTable(np.asarray(img_rows, dtype=np.float32), "image"),
        EmbeddingTable(np.asarray(txt_rows, dtype=np.float32), "text"),
        LabelTable(labels=np.asarray(labels), num_classes=len(txt_rows)),
    )


def test_consistency_equal_vectors():
    img, txt, labels = _tables([[1.0, 0.0]], [[1.0, 0.0], [0.0, 1.0]], [0])
    assert consistency_scores(img, txt, labels)[0] == 1.0


def test_consistency_orthogonal_vectors():
    img, txt, labels = _tables([[1.0, 0.0]], [[0.0, 1.0], [1.0, 0.0]], [0])
    assert consistency_scores(img, txt, labels)[0] == 0.0


def test_consistency_diagonal_fixture():
    u = 1.0 / np.sqrt(2.0)
    img, txt, labels = _tables([[1.0, 0.0]], [[u, u], [0.0, 1.0]], [0])
    con = consistency_scores(img, txt, labels)
    assert abs(con[0] - 0.70710678) < 1e-7


def test_consistency_rejects_zero_norm():
    img, txt, labels = _tables([[0.0, 0.0]], [[1.0, 0.0], [0.0, 1.0]], [0])
    with pytest.raises(ValidationError, match="zero-norm"):
        consistency_scores(img, txt, labels)


def test_consistency_shape_and_kind_checks():
    img, txt, labels = _tables([[1.0, 0.0]], [[1.0, 0.0], [0.0, 1.0]], [0])
    with pytest.raises(ValidationError):
        consistency_scores(txt, txt, labels)  # wrong kind first
    bad_labels = LabelTable(labels=np.array([0]), num_classes=3)
    with pytest.raises(ValidationError):
        consistency_scores(img, txt, bad_labels)  # class count mismatch


# ---- joint ---------------------------------------------------------------------


def test_joint_identity_factor():
    p_rho = np.array([0.1, 0.9, 0.4])
    assert np.array_equal(joint_scores(p_rho, np.ones(3)), p_rho)


def test_joint_annihilator():
    out = joint_scores(np.array([0.0, 0.5]), np.array([0.9, 0.9]))
    assert out[0] == 0.0


def test_joint_direct_product():
    assert joint_scores(np.array([0.8]), np.array([0.5]))[0] == 0.4


def test_joint_validation():
    with pytest.raises(ValidationError):
        joint_scores(np.array([0.5]), np.array([0.5, 0.5]))
    with pytest.raises(ValidationError):
        joint_scores(np.array([1.5]), np.array([0.5]))


def test_joint_commutes_with_permutation():
    rng = rng_for(23, 100)
    p_rho = rng.random(50)
    p_con = rng.random(50)
    perm = rng.permutation(50)
    assert np.array_equal(joint_scores(p_rho, p_con)[perm], joint_scores(p_rho[perm], p_con[perm]))


# ---- selection ------------------------------------------------------------------


def test_select_full_budget_returns_all_ids():
    out = select(np.array([0.2, 0.8, 0.5]), 3)
    assert sorted(out) == [0, 1, 2]


def test_select_top_k_with_ties():
    out = select(np.array([0.9, 0.1, 0.5, 0.5]), 2)
    assert out == [0, 2]


def test_select_output_ordering():
    p = np.array([0.3, 0.9, 0.3, 0.7])
    assert select(p, 4) == [1, 3, 0, 2]


def test_select_budget_range():
    with pytest.raises(ValidationError):
        select(np.array([0.5]), 0)
    with pytest.raises(ValidationError):
        select(np.array([0.5]), 2)


def test_select_dominant_score_under_both_policies():
    p = np.array([0.01, 0.99, 0.01])
    assert select(p, 1) == [1]
    counts = 0
    for seed in range(50):
        counts += select(p, 1, SelectionPolicy("weighted_sample"), seed=seed) == [1]
    assert counts >= 45  # weight 0.99 of the mass


def test_select_top_k_invariant_under_increasing_transform():
    rng = rng_for(24, 100)
    p = rng.random(80)
    transformed = np.arctan(p) / np.arctan(1.0) * 0.99  # strictly increasing into [0,1)
    assert select(p, 25) == select(transformed, 25)


def test_select_matches_full_sort_oracle_with_ties():
    rng = rng_for(25, 100)
    for trial in range(300):
        n = int(rng.integers(1, 40))
        levels = int(rng.integers(1, 6))
        p = rng.integers(0, levels, size=n) / max(levels - 1, 1)
        k = int(rng.integers(1, n + 1))
        oracle = sorted(range(n), key=lambda i: (-p[i], i))[:k]
        assert select(p, k) == oracle


def test_select_weighted_deterministic_and_distinct():
    p = rng_for(26, 100).random(30)
    a = select(p, 10, SelectionPolicy("weighted_sample"), seed=5)
    b = select(p, 10, SelectionPolicy("weighted_sample"), seed=5)
    c = select(p, 10, SelectionPolicy("weighted_sample"), seed=6)
    assert a == b
    assert a != c
    assert len(set(a)) == 10


def test_select_weighted_frequencies_match_weights():
    p = np.array([0.1, 0.2, 0.3, 0.4])
    total = p.sum()
    counts = np.zeros(4)
    draws = 10_000
    for seed in range(draws):
        counts[select(p, 1, "weighted_sample", seed=seed)[0]] += 1
    for i in range(4):
        expect = draws * p[i] / total
        sigma = np.sqrt(draws * (p[i] / total) * (1 - p[i] / total))
        assert abs(counts[i] - expect) <= 3 * sigma


def test_select_weighted_all_zero_falls_back_to_uniform():
    p = np.zeros(10)
    out = select(p, 4, "weighted_sample", seed=3)
    assert len(set(out)) == 4


# ---- score table and CSV ------------------------------------------------------------


def test_make_score_table_and_csv_round_trip(tmp_path):
    rng = rng_for(27, 100)
    rho = rng.random(20) * 5
    p_con = rng.random(20)
    table = make_score_table(rho, p_con)
    assert np.array_equal(table.p_sel, table.p_rho * table.p_con)
    path = tmp_path / "scores.csv"
    write_scores_csv(table, path)
    cols = read_scores_csv(path)
    assert cols["id"].tolist() == list(range(20))
    assert np.allclose(cols["p_sel"], table.p_sel, rtol=1e-8)
    header = path.read_text().splitlines()[0]
    assert header == "id,rho_raw,p_rho,p_con,p_sel"
