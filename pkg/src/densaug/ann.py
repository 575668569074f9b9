"""Online approximate nearest-neighbor search over a navigable small-world graph.

The index is the standard multi-layer HNSW construction: node levels drawn
from an exponential distribution with multiplier ``1/ln(M)``, greedy descent
through the upper layers, and a beam search of width ``ef`` on the layers a
node occupies.  Neighbor sets are chosen with the diversity heuristic — a
candidate is kept only when it is closer to the query than to every
already-kept neighbor — optionally extending the candidate pool with the
candidates' own neighbors; pruned candidates refill spare slots when a new
node picks its edges.

Two properties matter to callers beyond recall:

* every distance surfaced by a query is the *exact* Euclidean distance,
  produced by the single routine :func:`l2_distances` that the brute-force
  oracle also uses.  Traversal internally ranks by squared distances with
  cached norms (comparisons only, never surfaced); the candidates that
  survive the beam are re-ranked with exact distances before k are
  returned, so approximation affects which ids are found, never their
  distances;
* all tie-breaks are by smaller id, and the only randomness is the level
  draw from a seeded stream, so a fixed seed and insertion order reproduce
  the graph and all query results exactly.

In-place vector updates keep the node's layer membership, rebuild the
node's outgoing edges by re-running the insertion search, and leave stale
incoming edges to be repaired lazily: traversal always recomputes distances
from the live vector store, so a stale edge is merely a detour, never a
wrong distance.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import STREAM_HNSW_LEVELS, ValidationError, rng_for

__all__ = [
    "HnswIndex",
    "QueryStats",
    "l2_distances",
    "l2_distance",
    "brute_force_knn",
    "recall_at_k",
]


def l2_distances(rows: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Euclidean distance from ``query`` to each row, in float64.

    This is the package's one exact-distance routine; index, oracle, and
    scoring all report distances from it, which is what makes
    exact-equality checks between the approximate and exhaustive paths
    meaningful.
    """
    diff = np.asarray(rows, dtype=np.float64) - np.asarray(query, dtype=np.float64)
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


def l2_distance(a: np.ndarray, b: np.ndarray) -> float:
    return float(l2_distances(np.asarray(a, dtype=np.float64)[None, :], b)[0])


@dataclass
class QueryStats:
    """Work counter: how many (query, point) pairs the traversal evaluated."""

    distance_evaluations: int = 0


class HnswIndex:
    """Hierarchical navigable small-world graph with insert, update, and query.

    Thread contract: single writer, multiple readers.  Queries may run
    concurrently with each other but never with insert/update; the epoch
    loop serializes its update phase before scoring for exactly this reason.
    """

    def __init__(
        self,
        dim: int,
        m: int = 16,
        ef_construction: int = 200,
        seed: int = 0,
        extend_candidates: bool = False,
    ):
        if dim < 1:
            raise ValidationError("dim must be positive")
        if m < 2:
            raise ValidationError("M must be at least 2")
        if ef_construction < 1:
            raise ValidationError("ef_construction must be positive")
        self.dim = dim
        self.m = m
        self.m0 = 2 * m  # layer-0 degree cap
        self.ef_construction = ef_construction
        self.level_multiplier = 1.0 / math.log(m)
        self.extend_candidates = extend_candidates
        self._rng = rng_for(seed, STREAM_HNSW_LEVELS)

        self._vectors = np.empty((0, dim), dtype=np.float64)
        self._sqnorms = np.empty(0, dtype=np.float64)
        # fused traversal rows [-2x, |x|^2]: one gather + one matvec gives
        # d^2 - |q|^2, a constant shift that preserves every comparison
        self._aug = np.empty((0, dim + 1), dtype=np.float64)
        self._count = 0
        self._slot: dict[int, int] = {}  # sample id -> row in _vectors
        self._ids: list[int] = []  # row -> sample id
        self._ids_dense = True  # id == slot for every node inserted so far
        self._levels: dict[int, int] = {}
        self._links: dict[int, list[list[int]]] = {}  # id -> per-layer neighbor ids
        self.entry_point: int | None = None
        self.max_level = -1

    def __len__(self) -> int:
        return self._count

    def __contains__(self, sample_id: int) -> bool:
        return sample_id in self._slot

    # ---- storage ---------------------------------------------------------

    def _grow(self, needed: int) -> None:
        cap = self._vectors.shape[0]
        if needed <= cap:
            return
        new_cap = max(needed, max(1024, cap * 2))
        grown = np.empty((new_cap, self.dim), dtype=np.float64)
        grown[: self._count] = self._vectors[: self._count]
        self._vectors = grown
        grown_norms = np.empty(new_cap, dtype=np.float64)
        grown_norms[: self._count] = self._sqnorms[: self._count]
        self._sqnorms = grown_norms
        grown_aug = np.empty((new_cap, self.dim + 1), dtype=np.float64)
        grown_aug[: self._count] = self._aug[: self._count]
        self._aug = grown_aug

    def vector(self, sample_id: int) -> np.ndarray:
        if sample_id not in self._slot:
            raise ValidationError(f"unknown sample id {sample_id}")
        return self._vectors[self._slot[sample_id]].copy()

    def _check_dim(self, vec: np.ndarray) -> np.ndarray:
        vec = np.asarray(vec, dtype=np.float64).reshape(-1)
        if vec.shape[0] != self.dim:
            raise ValidationError(f"vector has dimension {vec.shape[0]}, index expects {self.dim}")
        if not np.all(np.isfinite(vec)):
            raise ValidationError("vector contains non-finite values")
        return vec

    def _slots_of(self, ids: Sequence[int]) -> Sequence[int]:
        if self._ids_dense:
            return ids
        slot = self._slot
        return [slot[i] for i in ids]

    def _sq_dists(self, query: np.ndarray, qq: float, ids: Sequence[int]) -> np.ndarray:
        """Squared distances for traversal ranking (never surfaced to callers)."""
        slots = self._slots_of(ids)
        rows = self._vectors[slots]
        return self._sqnorms[slots] - 2.0 * (rows @ query) + qq

    def _shifted_sq_dists(self, query_aug: np.ndarray, ids: Sequence[int]) -> np.ndarray:
        """d^2 - |q|^2 in one gather and one matvec; ordering-equivalent to d^2."""
        return self._aug[self._slots_of(ids)] @ query_aug

    # ---- graph search ----------------------------------------------------

    def _search_layer(
        self,
        query_aug: np.ndarray,
        entries: Sequence[int],
        layer: int,
        ef: int,
        stats: QueryStats | None = None,
        exclude: int | None = None,
    ) -> list[tuple[float, int]]:
        """Beam search on one layer.

        Returns up to ef (shifted-sq-distance, id) pairs ascending; the
        shift by -|q|^2 is constant per query, so every comparison matches
        the true-distance ordering.
        """
        links = self._links
        visited = set(entries)
        dists = self._shifted_sq_dists(query_aug, entries)
        if stats is not None:
            stats.distance_evaluations += len(entries)
        candidates: list[tuple[float, int]] = []
        best: list[tuple[float, int]] = []  # max-heap via (-dist, -id)
        for d, i in zip(dists.tolist(), entries):
            candidates.append((d, i))
            if i != exclude:
                best.append((-d, -i))
        heapq.heapify(candidates)
        heapq.heapify(best)
        while len(best) > ef:
            heapq.heappop(best)

        push = heapq.heappush
        pop = heapq.heappop
        replace = heapq.heapreplace
        while candidates:
            d, i = pop(candidates)
            full = len(best) >= ef
            if full:
                worst = best[0]
                if (d, i) > (-worst[0], -worst[1]):
                    break
            neighbors = [j for j in links[i][layer] if j not in visited]
            if not neighbors:
                continue
            visited.update(neighbors)
            nd = self._shifted_sq_dists(query_aug, neighbors)
            if stats is not None:
                stats.distance_evaluations += len(neighbors)
            if full:
                # the beam's worst only improves, so anything already worse
                # can be dropped wholesale before the per-item tie checks
                keep = nd <= -best[0][0]
                if not keep.any():
                    continue
                pairs = [(float(nd[t]), neighbors[t]) for t in np.nonzero(keep)[0]]
            else:
                pairs = list(zip(nd.tolist(), neighbors))
            for dj, j in pairs:
                if len(best) < ef:
                    push(candidates, (dj, j))
                    if j != exclude:
                        push(best, (-dj, -j))
                else:
                    worst = best[0]
                    if (dj, j) < (-worst[0], -worst[1]):
                        push(candidates, (dj, j))
                        if j != exclude:
                            replace(best, (-dj, -j))
        return sorted((-d, -i) for d, i in best)

    def _greedy_descend(
        self,
        query_aug: np.ndarray,
        from_level: int,
        to_level: int,
        stats: QueryStats | None = None,
    ) -> list[int]:
        """Walk from the entry point down to to_level+1 with beam width 1."""
        entry = [self.entry_point]
        for layer in range(from_level, to_level, -1):
            found = self._search_layer(query_aug, entry, layer, ef=1, stats=stats)
            entry = [i for _, i in found]
        return entry

    @staticmethod
    def _augment_query(vec: np.ndarray) -> np.ndarray:
        qa = np.empty(vec.shape[0] + 1, dtype=np.float64)
        qa[:-1] = vec
        qa[-1] = 1.0
        return qa

    # ---- neighbor selection (diversity heuristic) -------------------------

    def _select_neighbors(
        self,
        query_aug: np.ndarray,
        candidates: list[tuple[float, int]],
        m: int,
        layer: int,
        dist_shift: float = 0.0,
        extend: bool = False,
        keep_pruned: bool = True,
    ) -> list[int]:
        """Diversity-aware neighbor selection.

        ``candidates`` carry (possibly shifted) squared distances to the
        query; ``dist_shift`` restores true squared distances so they are
        comparable with candidate-to-candidate distances.
        """
        if extend:
            pool = {i for _, i in candidates}
            for _, i in list(candidates):
                for j in self._links[i][layer]:
                    pool.add(j)
            ids = sorted(pool)
            d2 = self._shifted_sq_dists(query_aug, ids)
            candidates = sorted(zip(d2.tolist(), ids))

        if len(candidates) <= m:
            return [i for _, i in candidates]

        ids = [i for _, i in candidates]
        slots = self._slots_of(ids)
        rows = self._vectors[slots]
        sq = self._sqnorms[slots]
        small = len(ids) <= 64
        gram = sq[:, None] + sq[None, :] - 2.0 * (rows @ rows.T) if small else None

        kept: list[int] = []  # candidate positions
        dropped: list[int] = []
        min_to_kept: np.ndarray | None = None  # d2 from each candidate to nearest kept
        for pos, (dist_q, _) in enumerate(candidates):
            if len(kept) == m:
                break
            if min_to_kept is None or dist_q + dist_shift < min_to_kept[pos]:
                kept.append(pos)
                col = gram[pos] if small else sq + (sq[pos] - 2.0 * (rows @ rows[pos]))
                if min_to_kept is None:
                    min_to_kept = col.copy()
                else:
                    np.minimum(min_to_kept, col, out=min_to_kept)
            else:
                dropped.append(pos)
        if keep_pruned:
            for pos in dropped:  # refill spare slots, nearest first
                if len(kept) == m:
                    break
                kept.append(pos)
        return [ids[pos] for pos in kept]

    def _shrink(self, sample_id: int, layer: int) -> None:
        """Re-select an overflowing adjacency list down to the layer cap.

        Mirrors the reference construction: diversity pruning without
        refill, so redundant edges are actually dropped.
        """
        cap = self.m0 if layer == 0 else self.m
        links = self._links[sample_id][layer]
        if len(links) <= cap:
            return
        slot = self._slot[sample_id]
        vec = self._vectors[slot]
        qq = float(self._sqnorms[slot])
        d2 = self._sq_dists(vec, qq, links)
        candidates = sorted(zip(d2.tolist(), links))
        self._links[sample_id][layer] = self._select_neighbors(
            self._augment_query(vec), candidates, cap, layer, keep_pruned=False
        )

    # ---- public operations -------------------------------------------------

    def insert(self, sample_id: int, vector: np.ndarray) -> None:
        if sample_id < 0:
            raise ValidationError("sample id must be non-negative")
        if sample_id in self._slot:
            raise ValidationError(f"duplicate sample id {sample_id}")
        vec = self._check_dim(vector)

        # level ~ floor(-ln(U) / ln(M)), U uniform in (0, 1]
        u = 1.0 - self._rng.random()
        level = int(math.floor(-math.log(u) * self.level_multiplier))

        self._grow(self._count + 1)
        slot = self._count
        self._vectors[slot] = vec
        sqnorm = float(vec @ vec)
        self._sqnorms[slot] = sqnorm
        self._aug[slot, :-1] = -2.0 * vec
        self._aug[slot, -1] = sqnorm
        self._slot[sample_id] = slot
        self._ids.append(sample_id)
        if sample_id != slot:
            self._ids_dense = False
        self._count += 1
        self._levels[sample_id] = level
        self._links[sample_id] = [[] for _ in range(level + 1)]

        if self.entry_point is None:
            self.entry_point = sample_id
            self.max_level = level
            return

        qa = self._augment_query(vec)
        entry = self._greedy_descend(qa, self.max_level, level)
        for layer in range(min(level, self.max_level), -1, -1):
            found = self._search_layer(qa, entry, layer, self.ef_construction, exclude=sample_id)
            neighbors = self._select_neighbors(
                qa, found, self.m, layer,
                dist_shift=sqnorm, extend=self.extend_candidates, keep_pruned=True,
            )
            self._links[sample_id][layer] = list(neighbors)
            for nb in neighbors:
                nb_links = self._links[nb][layer]
                if sample_id not in nb_links:
                    nb_links.append(sample_id)
                    self._shrink(nb, layer)
            entry = [i for _, i in found]

        if level > self.max_level:
            self.entry_point = sample_id
            self.max_level = level

    def update(self, sample_id: int, vector: np.ndarray) -> None:
        if sample_id not in self._slot:
            raise ValidationError(f"unknown sample id {sample_id}")
        vec = self._check_dim(vector)
        slot = self._slot[sample_id]
        if np.array_equal(vec, self._vectors[slot]):
            return  # no-op update: graph and all query results stay untouched
        self._vectors[slot] = vec
        sqnorm = float(vec @ vec)
        self._sqnorms[slot] = sqnorm
        self._aug[slot, :-1] = -2.0 * vec
        self._aug[slot, -1] = sqnorm
        level = self._levels[sample_id]

        if self._count == 1:
            return

        qa = self._augment_query(vec)
        entry = self._greedy_descend(qa, self.max_level, level)
        if entry == [sample_id]:
            entry = [self.entry_point]
        for layer in range(min(level, self.max_level), -1, -1):
            found = self._search_layer(qa, entry, layer, self.ef_construction, exclude=sample_id)
            neighbors = self._select_neighbors(
                qa, found, self.m, layer,
                dist_shift=sqnorm, extend=self.extend_candidates, keep_pruned=True,
            )
            self._links[sample_id][layer] = list(neighbors)
            for nb in neighbors:
                nb_links = self._links[nb][layer]
                if sample_id not in nb_links:
                    nb_links.append(sample_id)
                    self._shrink(nb, layer)
            entry = [i for _, i in found] or entry

    def query(
        self,
        vector: np.ndarray,
        k: int,
        ef_search: int,
        exclude: int | None = None,
    ) -> tuple[list[tuple[int, float]], QueryStats]:
        """k nearest stored samples by exact distance, ties to smaller id.

        Returns at most min(k, eligible) pairs ``(id, distance)`` sorted
        ascending by (distance, id), plus the query's work counter.  The
        beam's surviving candidates are re-ranked with exact distances, so
        the reported values always match :func:`l2_distances` bit-for-bit.
        """
        if self._count == 0:
            raise ValidationError("query on empty index")
        if k < 1:
            raise ValidationError("k must be positive")
        if ef_search < k:
            raise ValidationError(f"ef_search={ef_search} must be at least k={k}")
        vec = self._check_dim(vector)
        qa = self._augment_query(vec)
        stats = QueryStats()
        ef = max(ef_search, k + (1 if exclude is not None else 0))
        entry = self._greedy_descend(qa, self.max_level, 0, stats=stats)
        found = self._search_layer(qa, entry, 0, ef, stats=stats, exclude=exclude)
        ids = [i for _, i in found]
        exact = l2_distances(self._vectors[self._slots_of(ids)], vec)
        order = np.lexsort((ids, exact))
        out = [(int(ids[pos]), float(exact[pos])) for pos in order[:k]]
        return out, stats

    # ---- snapshots -----------------------------------------------------------

    def save_snapshot(self, path) -> None:
        """Debugging snapshot of the whole graph (magic ``HNS1``).

        Layout (little-endian): magic | d u32 | M u32 | ef_construction u32 |
        max_level i32 | entry u64 | n u64, then per node: id u64 | level u32 |
        d float64 vector | per layer (level+1 of them): count u32 + count u64
        neighbor ids.  The level-draw RNG position is not captured, so an
        index restored from a snapshot serves queries and updates but would
        draw fresh levels for newly inserted nodes.
        """
        import struct
        from pathlib import Path

        parts = [
            b"HNS1",
            struct.pack(
                "<IIIiQQ",
                self.dim,
                self.m,
                self.ef_construction,
                self.max_level,
                self.entry_point if self.entry_point is not None else 2**64 - 1,
                self._count,
            ),
        ]
        for sample_id in self._ids:
            level = self._levels[sample_id]
            parts.append(struct.pack("<QI", sample_id, level))
            parts.append(self._vectors[self._slot[sample_id]].astype("<f8").tobytes())
            for links in self._links[sample_id]:
                parts.append(struct.pack("<I", len(links)))
                parts.append(np.asarray(links, dtype="<u8").tobytes())
        Path(path).write_bytes(b"".join(parts))

    @classmethod
    def load_snapshot(cls, path) -> "HnswIndex":
        import struct
        from pathlib import Path

        from .core import FileFormatError

        blob = Path(path).read_bytes()
        if blob[:4] != b"HNS1":
            raise FileFormatError(f"{path}: bad magic (expected HNS1)")
        offset = 4
        dim, m, ef_construction, max_level, entry, count = struct.unpack_from(
            "<IIIiQQ", blob, offset
        )
        offset += struct.calcsize("<IIIiQQ")
        index = cls(dim=dim, m=m, ef_construction=ef_construction)
        try:
            for _ in range(count):
                sample_id, level = struct.unpack_from("<QI", blob, offset)
                offset += struct.calcsize("<QI")
                vec = np.frombuffer(blob, dtype="<f8", count=dim, offset=offset).copy()
                offset += dim * 8
                layers = []
                for _ in range(level + 1):
                    (n_links,) = struct.unpack_from("<I", blob, offset)
                    offset += 4
                    ids = np.frombuffer(blob, dtype="<u8", count=n_links, offset=offset)
                    offset += n_links * 8
                    layers.append([int(i) for i in ids])
                index._grow(index._count + 1)
                slot = index._count
                index._vectors[slot] = vec
                sqnorm = float(vec @ vec)
                index._sqnorms[slot] = sqnorm
                index._aug[slot, :-1] = -2.0 * vec
                index._aug[slot, -1] = sqnorm
                index._slot[sample_id] = slot
                index._ids.append(sample_id)
                if sample_id != slot:
                    index._ids_dense = False
                index._count += 1
                index._levels[sample_id] = level
                index._links[sample_id] = layers
        except struct.error as exc:
            raise FileFormatError(f"{path}: truncated snapshot ({exc})") from exc
        index.max_level = max_level
        index.entry_point = None if entry == 2**64 - 1 else int(entry)
        index.check_well_formed()
        return index

    # ---- introspection -----------------------------------------------------

    def check_well_formed(self) -> None:
        """Raise if any structural invariant is broken (used by tests)."""
        for sample_id, layers in self._links.items():
            if len(layers) != self._levels[sample_id] + 1:
                raise AssertionError(f"node {sample_id}: layer list does not match level")
            for layer, links in enumerate(layers):
                cap = self.m0 if layer == 0 else self.m
                if len(links) > cap:
                    raise AssertionError(
                        f"node {sample_id} layer {layer}: degree {len(links)} > cap {cap}"
                    )
                if sample_id in links:
                    raise AssertionError(f"node {sample_id} layer {layer}: self-edge")
                if len(set(links)) != len(links):
                    raise AssertionError(f"node {sample_id} layer {layer}: duplicate edges")
                for j in links:
                    if j not in self._slot:
                        raise AssertionError(f"node {sample_id} layer {layer}: dangling edge to {j}")
                    if self._levels[j] < layer:
                        raise AssertionError(
                            f"node {sample_id} layer {layer}: edge to {j} below its level"
                        )
        if self._count > 0:
            if self.entry_point not in self._slot:
                raise AssertionError("entry point is not a stored node")
            if self._levels[self.entry_point] != self.max_level:
                raise AssertionError("entry point is not at max_level")


def brute_force_knn(
    features,
    query: int | np.ndarray,
    k: int,
    exclude_self: bool = False,
) -> list[tuple[int, float]]:
    """Exact k nearest neighbors by full scan; the oracle for every recall test.

    ``query`` is either a sample id (row index into the store) or a raw
    vector.  Ties break toward the smaller id.
    """
    vectors = features.vectors if hasattr(features, "vectors") else np.asarray(features)
    n = vectors.shape[0]
    query_id: int | None = None
    if isinstance(query, (int, np.integer)):
        query_id = int(query)
        if not (0 <= query_id < n):
            raise ValidationError(f"query id {query_id} out of range [0, {n})")
        query_vec = vectors[query_id]
    else:
        query_vec = np.asarray(query, dtype=np.float64)

    eligible = n - (1 if (exclude_self and query_id is not None) else 0)
    if not (1 <= k <= eligible):
        raise ValidationError(f"k={k} out of range [1, {eligible}]")

    dists = l2_distances(vectors, query_vec)
    order = np.lexsort((np.arange(n), dists))  # by (distance, id)
    out: list[tuple[int, float]] = []
    for idx in order:
        if exclude_self and query_id is not None and idx == query_id:
            continue
        out.append((int(idx), float(dists[idx])))
        if len(out) == k:
            break
    return out


def recall_at_k(approx_ids: Sequence[int], exact_ids: Sequence[int]) -> float:
    """|approx ∩ exact| / k for two id lists of equal length k."""
    if len(approx_ids) != len(exact_ids):
        raise ValidationError(
            f"recall needs equal-length lists, got {len(approx_ids)} and {len(exact_ids)}"
        )
    if len(exact_ids) == 0:
        raise ValidationError("recall of empty lists is undefined")
    return len(set(approx_ids) & set(exact_ids)) / len(exact_ids)
