"""Nearest-neighbor search over embedding matrices by maximum dot product.

Two index flavors: a brute-force exact scan (also the recall oracle) and an
inverted-file index whose coarse quantizer is a seeded k-means.  Queries probe
the ``n_probe`` partitions with the closest centroids (Euclidean), then rank
candidates by dot product.  Ties always break toward the ascending id so that
results are reproducible.

Batched partitioned search runs a compiled kernel that walks the probed
inverted lists cluster-major and maintains each query's top-n on the fly;
nothing is materialized per candidate, which is where a vectorized-numpy
formulation loses its time.  Scores from that kernel can differ from the BLAS
paths in the last float32 bits, so cross-path comparisons should allow a tiny
tolerance on scores (ranked ids match exactly up to score ties).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numba import njit, prange

from .errors import DimensionMismatch, DuplicateId, EmptyInput, InvalidPartitionCount

KMEANS_MAX_ITERS = 20
SCAN_CHUNKS = 16


def _id_ranks(ids: Sequence) -> np.ndarray:
    order = sorted(range(len(ids)), key=lambda i: ids[i])
    rank = np.empty(len(ids), dtype=np.int64)
    rank[order] = np.arange(len(ids))
    return rank


def _validate(embeddings: np.ndarray, ids: Sequence) -> np.ndarray:
    embeddings = np.asarray(embeddings)
    if embeddings.ndim != 2 or embeddings.shape[0] == 0:
        raise EmptyInput("index requires a non-empty [n, d] embedding matrix")
    if len(ids) != embeddings.shape[0]:
        raise DimensionMismatch(f"{embeddings.shape[0]} vectors but {len(ids)} ids")
    if len(set(ids)) != len(ids):
        raise DuplicateId("index ids must be unique")
    return embeddings


@dataclass
class ExactIndex:
    vectors: np.ndarray
    ids: list
    id_rank: np.ndarray


@dataclass
class PartitionedIndex:
    centroids: np.ndarray      # [c, d]
    radii: np.ndarray          # [c] max member distance from its centroid
    assignments: np.ndarray    # [n] cluster of each vector (original order)
    sorted_vectors: np.ndarray  # vectors regrouped cluster-major
    sorted_pos: np.ndarray     # original position of each regrouped row
    offsets: np.ndarray        # [c + 1] slice bounds into the regrouped rows
    ids: list
    id_rank: np.ndarray
    n_probe: int


def build_exact(embeddings: np.ndarray, ids: Sequence) -> ExactIndex:
    embeddings = _validate(embeddings, ids)
    return ExactIndex(vectors=embeddings, ids=list(ids), id_rank=_id_ranks(ids))


def _kmeans(x: np.ndarray, c: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded Lloyd iterations, capped; returns (centroids, assignments)."""
    n = x.shape[0]
    rng = np.random.default_rng(seed)
    xf = x.astype(np.float64, copy=False)
    centroids = xf[np.sort(rng.choice(n, size=c, replace=False))].copy()
    assign = np.full(n, -1, dtype=np.int64)
    sq_x = (xf * xf).sum(axis=1)
    for _ in range(KMEANS_MAX_ITERS):
        d2 = sq_x[:, None] - 2.0 * (xf @ centroids.T) + (centroids * centroids).sum(axis=1)
        new_assign = d2.argmin(axis=1)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        counts = np.bincount(assign, minlength=c)
        sums = np.zeros_like(centroids)
        np.add.at(sums, assign, xf)
        nonempty = counts > 0
        centroids[nonempty] = sums[nonempty] / counts[nonempty, None]
        if not nonempty.all():
            # reseed each empty cluster on the point farthest from its centroid
            own = d2[np.arange(n), assign].copy()
            for j in np.flatnonzero(~nonempty):
                far = int(own.argmax())
                centroids[j] = xf[far]
                own[far] = -np.inf
    return centroids, assign


def build_partitioned(
    embeddings: np.ndarray, ids: Sequence, c: int, n_probe: int, seed: int = 0
) -> PartitionedIndex:
    """Cluster vectors with seeded k-means and group them into inverted lists."""
    embeddings = _validate(embeddings, ids)
    n = embeddings.shape[0]
    if not 1 <= c <= n:
        raise InvalidPartitionCount(f"partition count {c} outside [1, {n}]")
    if not 1 <= n_probe <= c:
        raise InvalidPartitionCount(f"n_probe {n_probe} outside [1, {c}]")
    centroids, assign = _kmeans(embeddings, c, seed)
    order = np.argsort(assign, kind="stable")
    offsets = np.zeros(c + 1, dtype=np.int64)
    np.cumsum(np.bincount(assign, minlength=c), out=offsets[1:])
    spread = embeddings.astype(np.float64) - centroids[assign]
    dist = np.sqrt((spread * spread).sum(axis=1))
    radii = np.zeros(c)
    np.maximum.at(radii, assign, dist)
    return PartitionedIndex(
        centroids=centroids.astype(embeddings.dtype),
        radii=radii.astype(embeddings.dtype),
        assignments=assign,
        sorted_vectors=np.ascontiguousarray(embeddings[order]),
        sorted_pos=order,
        offsets=offsets,
        ids=list(ids),
        id_rank=_id_ranks(ids),
        n_probe=n_probe,
    )


def _top_positions(scores: np.ndarray, ranks: np.ndarray, n: int) -> np.ndarray:
    """Positions of the n best scores, ties broken by ascending id rank."""
    if len(scores) > n:
        part = np.argpartition(-scores, n - 1)
        thresh = scores[part[n - 1]]
        cand = np.flatnonzero(scores >= thresh)
    else:
        cand = np.arange(len(scores))
    order = cand[np.lexsort((ranks[cand], -scores[cand]))]
    return order[:n]


def _probe_clusters(index: PartitionedIndex, query: np.ndarray) -> np.ndarray:
    c = index.centroids.shape[0]
    d2 = (index.centroids * index.centroids).sum(axis=1) - 2.0 * (index.centroids @ query)
    if index.n_probe >= c:
        return np.arange(c)
    part = np.argpartition(d2, index.n_probe - 1)
    thresh = d2[part[index.n_probe - 1]]
    cand = np.flatnonzero(d2 <= thresh)
    order = cand[np.lexsort((cand, d2[cand]))]
    return order[: index.n_probe]


def search(
    index: ExactIndex | PartitionedIndex, query: np.ndarray, n: int
) -> list[tuple[object, float]]:
    """Top-n (id, dot score) pairs, best first."""
    query = np.asarray(query)
    if isinstance(index, ExactIndex):
        if query.shape != (index.vectors.shape[1],):
            raise DimensionMismatch(
                f"query shape {query.shape} vs index dim {index.vectors.shape[1]}"
            )
        scores = index.vectors @ query
        top = _top_positions(scores, index.id_rank, n)
        return [(index.ids[i], float(scores[i])) for i in top]
    if query.shape != (index.sorted_vectors.shape[1],):
        raise DimensionMismatch(
            f"query shape {query.shape} vs index dim {index.sorted_vectors.shape[1]}"
        )
    clusters = _probe_clusters(index, query)
    pieces = [
        np.arange(index.offsets[j], index.offsets[j + 1]) for j in clusters
    ]
    cand = np.concatenate(pieces)
    scores = index.sorted_vectors[cand] @ query
    pos = index.sorted_pos[cand]
    top = _top_positions(scores, index.id_rank[pos], n)
    return [(index.ids[pos[i]], float(scores[i])) for i in top]


@njit(inline="always")
def _top_insert(top_score, top_rank, top_row, counts, qi, s, rank_m, m, n):
    cnt = counts[qi]
    if cnt == n:
        worst = top_score[qi, n - 1]
        if s < worst or (s == worst and rank_m > top_rank[qi, n - 1]):
            return
        pos = n - 1
    else:
        pos = cnt
        counts[qi] = cnt + 1
    while pos > 0 and (
        top_score[qi, pos - 1] < s
        or (top_score[qi, pos - 1] == s and top_rank[qi, pos - 1] > rank_m)
    ):
        top_score[qi, pos] = top_score[qi, pos - 1]
        top_rank[qi, pos] = top_rank[qi, pos - 1]
        top_row[qi, pos] = top_row[qi, pos - 1]
        pos -= 1
    top_score[qi, pos] = s
    top_rank[qi, pos] = rank_m
    top_row[qi, pos] = m


@njit(cache=True, parallel=True, fastmath=True)
def _scan_partitions(sorted_vectors, offsets, bounds, flat_query, queries, sorted_rank,
                     centroids, radii, qnorm, prime, n, n_chunks):
    """Walk probed inverted lists cluster-major, keeping per-query top-n.

    ``flat_query`` holds the (cluster-sorted) query index of every probe;
    ``bounds[j]:bounds[j+1]`` is cluster j's slice of it.  Each query is first
    primed on its nearest-centroid list (``prime``), then the main pass skips
    any list whose ball bound q.c + radius*|q| cannot beat the query's current
    n-th best score; the strict inequality keeps score ties exact.  Parallel
    chunks own contiguous query ranges, so the output does not depend on the
    chunk count or schedule.  Candidates are ordered (score desc, id rank asc).
    """
    nq = queries.shape[0]
    d = queries.shape[1]
    c = offsets.shape[0] - 1
    top_score = np.full((nq, n), -np.inf, dtype=np.float32)
    top_rank = np.full((nq, n), np.iinfo(np.int64).max, dtype=np.int64)
    top_row = np.full((nq, n), -1, dtype=np.int64)
    counts = np.zeros(nq, dtype=np.int64)
    chunk = (nq + n_chunks - 1) // n_chunks
    for ci in prange(n_chunks):
        q_lo = ci * chunk
        q_hi = min(nq, q_lo + chunk)
        for qi in range(q_lo, q_hi):
            j = prime[qi]
            for m in range(offsets[j], offsets[j + 1]):
                s = np.float32(0.0)
                for k in range(d):
                    s += sorted_vectors[m, k] * queries[qi, k]
                _top_insert(top_score, top_rank, top_row, counts, qi, s, sorted_rank[m], m, n)
        active = np.empty(nq, dtype=np.int64)
        for j in range(c):
            lo = bounds[j]
            hi = bounds[j + 1]
            a = lo
            while a < hi and flat_query[a] < q_lo:
                a += 1
            b = a
            while b < hi and flat_query[b] < q_hi:
                b += 1
            if a == b:
                continue
            n_active = 0
            for t in range(a, b):
                qi = flat_query[t]
                if prime[qi] == j:
                    continue
                if counts[qi] == n:
                    cb = np.float32(0.0)
                    for k in range(d):
                        cb += centroids[j, k] * queries[qi, k]
                    if cb + radii[j] * qnorm[qi] < top_score[qi, n - 1]:
                        continue
                active[n_active] = qi
                n_active += 1
            if n_active == 0:
                continue
            for m in range(offsets[j], offsets[j + 1]):
                rank_m = sorted_rank[m]
                for t in range(n_active):
                    qi = active[t]
                    s = np.float32(0.0)
                    for k in range(d):
                        s += sorted_vectors[m, k] * queries[qi, k]
                    _top_insert(top_score, top_rank, top_row, counts, qi, s, rank_m, m, n)
    return top_score, top_row, counts


def search_batch(
    index: ExactIndex | PartitionedIndex, queries: np.ndarray, n: int
) -> list[list[tuple[object, float]]]:
    """Top-n results for each query row, best first."""
    queries = np.asarray(queries)
    if queries.ndim != 2:
        raise DimensionMismatch("queries must be a [q, d] matrix")
    if isinstance(index, ExactIndex):
        if queries.shape[1] != index.vectors.shape[1]:
            raise DimensionMismatch(
                f"query dim {queries.shape[1]} vs index dim {index.vectors.shape[1]}"
            )
        all_scores = queries @ index.vectors.T
        out = []
        for scores in all_scores:
            top = _top_positions(scores, index.id_rank, n)
            out.append([(index.ids[i], float(scores[i])) for i in top])
        return out
    if queries.shape[1] != index.sorted_vectors.shape[1]:
        raise DimensionMismatch(
            f"query dim {queries.shape[1]} vs index dim {index.sorted_vectors.shape[1]}"
        )
    q = queries.shape[0]
    c = index.centroids.shape[0]
    n_probe = index.n_probe
    d2 = (index.centroids * index.centroids).sum(axis=1)[None, :] - 2.0 * (
        queries @ index.centroids.T
    )
    if n_probe >= c:
        probes = np.tile(np.arange(c), (q, 1))
    else:
        probes = np.argpartition(d2, n_probe - 1, axis=1)[:, :n_probe]
    flat_cluster = probes.ravel()
    flat_query = np.repeat(np.arange(q, dtype=np.int64), probes.shape[1])
    order = np.argsort(flat_cluster, kind="stable")
    flat_cluster = flat_cluster[order]
    flat_query = np.ascontiguousarray(flat_query[order])
    bounds = np.searchsorted(flat_cluster, np.arange(c + 1)).astype(np.int64)
    dtype = index.sorted_vectors.dtype
    queries_c = np.ascontiguousarray(queries, dtype=dtype)
    qnorm = np.sqrt((queries_c * queries_c).sum(axis=1))
    top_score, top_row, counts = _scan_partitions(
        index.sorted_vectors,
        index.offsets,
        bounds,
        flat_query,
        queries_c,
        np.ascontiguousarray(index.id_rank[index.sorted_pos]),
        np.ascontiguousarray(index.centroids, dtype=dtype),
        np.ascontiguousarray(index.radii, dtype=dtype),
        qnorm,
        d2.argmin(axis=1),
        n,
        min(q, SCAN_CHUNKS),
    )
    out = []
    for qi in range(q):
        rows = top_row[qi, : counts[qi]]
        pos = index.sorted_pos[rows]
        out.append([(index.ids[p], float(s)) for p, s in zip(pos, top_score[qi])])
    return out
