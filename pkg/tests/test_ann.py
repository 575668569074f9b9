"""HNSW index: insert/update/query semantics, oracles, and graph invariants."""

import numpy as np
import pytest

from densaug.ann import HnswIndex, brute_force_knn, l2_distances, recall_at_k
from densaug.core import FeatureStore, ValidationError, rng_for


def _build(data, m=16, ef_construction=200, seed=0):
    index = HnswIndex(dim=data.shape[1], m=m, ef_construction=ef_construction, seed=seed)
    for i in range(data.shape[0]):
        index.insert(i, data[i])
    return index


# ---- insert -------------------------------------------------------------------


def test_insert_first_element_becomes_entry_point():
    index = HnswIndex(dim=3, m=4, ef_construction=8, seed=1)
    index.insert(7, np.array([1.0, 2.0, 3.0]))
    assert index.entry_point == 7
    assert index.max_level >= 0
    assert len(index) == 1


def test_insert_grid_points_retrieve_themselves():
    xs, ys = np.meshgrid(np.arange(10.0), np.arange(10.0))
    grid = np.stack([xs.ravel(), ys.ravel()], axis=1)
    index = _build(grid, m=8, ef_construction=32, seed=3)
    for i in range(100):
        found, _ = index.query(grid[i], 1, ef_search=16)
        assert found == [(i, 0.0)]


def test_insert_duplicate_id_rejected():
    index = HnswIndex(dim=2, m=4, ef_construction=8)
    index.insert(0, np.zeros(2))
    with pytest.raises(ValidationError, match="duplicate"):
        index.insert(0, np.ones(2))


def test_insert_dimension_mismatch():
    index = HnswIndex(dim=2, m=4, ef_construction=8)
    with pytest.raises(ValidationError, match="dimension"):
        index.insert(0, np.zeros(3))


def test_insert_gaussian_recall():
    rng = rng_for(5, 100)
    n, d = 1500, 32
    data = rng.normal(size=(n + 50, d))
    index = _build(data[:n], m=16, ef_construction=200, seed=5)
    fs = FeatureStore(data[:n])
    recalls = []
    for q in range(50):
        found, _ = index.query(data[n + q], 10, ef_search=128)
        exact = brute_force_knn(fs, data[n + q], 10)
        recalls.append(recall_at_k([i for i, _ in found], [i for i, _ in exact]))
    assert np.mean(recalls) >= 0.95


# ---- update -------------------------------------------------------------------


def test_update_same_vector_is_noop():
    rng = rng_for(6, 100)
    data = rng.normal(size=(200, 8))
    index = _build(data, m=8, ef_construction=64, seed=6)
    before = [index.query(data[i], 5, ef_search=32)[0] for i in range(50)]
    for i in range(200):
        index.update(i, data[i])
    after = [index.query(data[i], 5, ef_search=32)[0] for i in range(50)]
    assert before == after


def test_update_moves_point_onto_cluster_center():
    rng = rng_for(7, 100)
    center = np.full(4, 3.0)
    cluster = center + 0.01 * rng.normal(size=(30, 4))
    lone = np.full((1, 4), -20.0)
    data = np.vstack([cluster, lone])
    index = _build(data, m=8, ef_construction=64, seed=7)
    moved = center + np.array([0.5, 0.0, 0.0, 0.0])
    index.update(30, moved)
    found, _ = index.query(moved, 1, ef_search=64, exclude=30)
    fs = FeatureStore(np.vstack([cluster, moved[None, :]]))
    exact = brute_force_knn(fs, 30, 1, exclude_self=True)
    assert found == exact


def test_update_all_points_recall():
    rng = rng_for(8, 100)
    n, d = 2000, 16
    index = _build(rng.normal(size=(n, d)), m=16, ef_construction=200, seed=8)
    fresh = rng.normal(size=(n, d))
    for i in range(n):
        index.update(i, fresh[i])
    index.check_well_formed()
    fs = FeatureStore(fresh)
    recalls = []
    for q in range(100):
        found, _ = index.query(fresh[q], 10, ef_search=128, exclude=q)
        exact = brute_force_knn(fs, q, 10, exclude_self=True)
        recalls.append(recall_at_k([i for i, _ in found], [i for i, _ in exact]))
    assert np.mean(recalls) >= 0.9


def test_update_unknown_id():
    index = HnswIndex(dim=2, m=4, ef_construction=8)
    index.insert(0, np.zeros(2))
    with pytest.raises(ValidationError, match="unknown"):
        index.update(1, np.ones(2))


# ---- query --------------------------------------------------------------------


def test_query_single_point_index():
    index = HnswIndex(dim=2, m=4, ef_construction=8)
    index.insert(3, np.array([1.0, 1.0]))
    found, stats = index.query(np.array([1.0, 1.0]), 1, ef_search=4)
    assert found == [(3, 0.0)]
    assert stats.distance_evaluations >= 1


def test_query_k_larger_than_n_saturates():
    data = np.arange(8, dtype=float).reshape(4, 2)
    index = _build(data, m=4, ef_construction=8)
    found, _ = index.query(np.zeros(2), 10, ef_search=16)
    assert len(found) == 4


def test_query_one_dimensional_fixture():
    index = HnswIndex(dim=1, m=4, ef_construction=16, seed=2)
    for i, v in enumerate([0.0, 1.0, 2.0, 3.0, 10.0]):
        index.insert(i, np.array([v]))
    found, _ = index.query(np.array([10.0]), 2, ef_search=8, exclude=4)
    assert found == [(3, 7.0), (2, 8.0)]


def test_query_errors():
    index = HnswIndex(dim=2, m=4, ef_construction=8)
    with pytest.raises(ValidationError, match="empty"):
        index.query(np.zeros(2), 1, ef_search=4)
    index.insert(0, np.zeros(2))
    with pytest.raises(ValidationError, match="ef_search"):
        index.query(np.zeros(2), 4, ef_search=2)


def test_query_distances_are_exact():
    rng = rng_for(9, 100)
    data = rng.normal(size=(400, 8))
    index = _build(data, m=8, ef_construction=64, seed=9)
    for q in range(20):
        probe = rng.normal(size=8)
        found, _ = index.query(probe, 7, ef_search=64)
        ids = [i for i, _ in found]
        expected = l2_distances(data[ids], probe)
        assert np.array_equal(np.array([d for _, d in found]), expected)
        assert all(
            (a[1], a[0]) <= (b[1], b[0]) for a, b in zip(found, found[1:])
        )


# ---- brute-force oracle ---------------------------------------------------------


def test_brute_force_two_points():
    fs = FeatureStore(np.array([[0.0, 0.0], [3.0, 4.0]]))
    assert brute_force_knn(fs, 0, 1, exclude_self=True) == [(1, 5.0)]


def test_brute_force_tie_breaks_to_smaller_id():
    fs = FeatureStore(np.array([[1.0], [0.0], [0.0], [0.0]]))
    found = brute_force_knn(fs, 0, 2, exclude_self=True)
    assert [i for i, _ in found] == [1, 2]


def test_brute_force_matches_independent_full_sort():
    rng = rng_for(10, 100)
    data = rng.normal(size=(500, 8))
    fs = FeatureStore(data)
    for qid in (0, 17, 499):
        found = brute_force_knn(fs, qid, 12, exclude_self=True)
        # independent oracle: stable argsort over rounded pair keys
        dists = np.sqrt(((data - data[qid]) ** 2).sum(axis=1))
        order = [int(i) for i in np.argsort(dists, kind="stable") if i != qid][:12]
        assert [i for i, _ in found] == order


def test_brute_force_k_out_of_range():
    fs = FeatureStore(np.zeros((3, 2)))
    with pytest.raises(ValidationError):
        brute_force_knn(fs, 0, 3, exclude_self=True)


# ---- recall metric ------------------------------------------------------------


def test_recall_values():
    assert recall_at_k([1, 2, 3], [1, 2, 3]) == 1.0
    assert recall_at_k([1, 2], [3, 4]) == 0.0
    assert recall_at_k(list(range(10)), list(range(7)) + [90, 91, 92]) == 0.7
    with pytest.raises(ValidationError):
        recall_at_k([1], [1, 2])


# ---- structural invariants -------------------------------------------------------


def test_monotone_ef_recall():
    rng = rng_for(11, 100)
    n, d = 1200, 16
    data = rng.normal(size=(n + 100, d))
    index = _build(data[:n], m=8, ef_construction=100, seed=11)
    fs = FeatureStore(data[:n])
    exact = [brute_force_knn(fs, data[n + q], 10) for q in range(100)]
    means = []
    for ef in (10, 20, 40, 80, 160):
        recalls = [
            recall_at_k(
                [i for i, _ in index.query(data[n + q], 10, ef_search=ef)[0]],
                [i for i, _ in exact[q]],
            )
            for q in range(100)
        ]
        means.append(np.mean(recalls))
    assert all(a <= b + 1e-12 for a, b in zip(means, means[1:]))


def test_graph_well_formed_after_interleaving():
    rng = rng_for(12, 100)
    index = HnswIndex(dim=6, m=6, ef_construction=48, seed=12)
    live = []
    for step in range(600):
        if live and rng.random() < 0.3:
            i = int(rng.choice(live))
            index.update(i, rng.normal(size=6))
        else:
            i = len(live)
            index.insert(i, rng.normal(size=6))
            live.append(i)
    index.check_well_formed()


def test_determinism_same_seed_same_results():
    rng = rng_for(13, 100)
    data = rng.normal(size=(400, 8))
    queries = rng.normal(size=(20, 8))

    def run():
        index = _build(data, m=8, ef_construction=64, seed=99)
        return [index.query(q, 5, ef_search=64)[0] for q in queries]

    assert run() == run()


def test_distance_evaluations_counted():
    rng = rng_for(14, 100)
    data = rng.normal(size=(500, 8))
    index = _build(data, m=8, ef_construction=64, seed=14)
    _, stats = index.query(rng.normal(size=8), 10, ef_search=32)
    assert stats.distance_evaluations >= 10
    assert stats.distance_evaluations < 500  # sub-exhaustive


def test_snapshot_round_trip(tmp_path):
    rng = rng_for(15, 100)
    data = rng.normal(size=(300, 6))
    index = _build(data, m=8, ef_construction=48, seed=15)
    path = tmp_path / "graph.hns1"
    index.save_snapshot(path)
    restored = HnswIndex.load_snapshot(path)
    restored.check_well_formed()
    for q in range(20):
        probe = rng.normal(size=6)
        assert restored.query(probe, 5, ef_search=48) == index.query(probe, 5, ef_search=48)
    from densaug.core import FileFormatError

    bad = tmp_path / "bad.hns1"
    bad.write_bytes(b"XXXX" + bytes(10))
    with pytest.raises(FileFormatError):
        HnswIndex.load_snapshot(bad)
