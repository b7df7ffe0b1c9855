"""Exact inner-product search over immutable shard collections.

Scores are 64-bit dot products computed per row, so the score of a
gallery entry does not depend on how the gallery is sharded, chunked,
or threaded; ranked output is therefore byte-identical between the
serial scan and the parallel per-shard scan.  Ties break by ascending
id.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .shard import load_shard

CHUNK_ROWS = 65536


class EmptyGallery(Exception):
    pass


class MissingMate(Exception):
    pass


@dataclass
class Gallery:
    """Shards resident as float64 matrices with parallel u64 id arrays."""

    shards: list

    def __post_init__(self):
        dims = {v.shape[1] for _, v in self.shards if v.shape[0] > 0}
        if len(dims) > 1:
            raise ValueError(f"mixed embedding dims {sorted(dims)}")

    @classmethod
    def from_arrays(cls, pairs):
        shards = [
            (
                np.ascontiguousarray(ids, dtype=np.uint64),
                np.ascontiguousarray(vectors, dtype=np.float64),
            )
            for ids, vectors in pairs
        ]
        return cls(shards=shards)

    @classmethod
    def from_paths(cls, paths):
        return cls.from_arrays(load_shard(p) for p in paths)

    @property
    def size(self):
        return sum(v.shape[0] for _, v in self.shards)

    @property
    def dim(self):
        for _, v in self.shards:
            if v.shape[0] > 0:
                return v.shape[1]
        return 0

    def id_set(self):
        out = set()
        for ids, _ in self.shards:
            out.update(int(i) for i in ids)
        return out


def _shard_scores(vectors, probe):
    """Per-row f64 dot products, chunked to bound the working set."""
    n = vectors.shape[0]
    out = np.empty(n, dtype=np.float64)
    for start in range(0, n, CHUNK_ROWS):
        stop = min(start + CHUNK_ROWS, n)
        out[start:stop] = vectors[start:stop] @ probe
    return out


def _top_candidates(ids, scores, k):
    """Top k rows under the total order (score desc, id asc).

    Ties at the cut keep the smallest ids, so the kept set is a pure
    function of the data and the serial and sharded paths agree even
    when scores collide exactly.
    """
    n = scores.shape[0]
    if k < n:
        part = np.argpartition(scores, n - k)
        boundary = scores[part[n - k]]
        strict = np.nonzero(scores > boundary)[0]
        tied = np.nonzero(scores == boundary)[0]
        need = k - strict.size
        tied = tied[np.argsort(ids[tied], kind="stable")][:need]
        keep = np.concatenate([strict, tied])
        ids = ids[keep]
        scores = scores[keep]
    order = np.lexsort((ids, -scores))
    return ids[order], scores[order]


def _scan_shard(shard, probe, k):
    ids, vectors = shard
    if vectors.shape[0] == 0:
        return ids[:0], np.empty(0, dtype=np.float64)
    scores = _shard_scores(vectors, probe)
    return _top_candidates(ids, scores, min(k, scores.shape[0]))


def search_topk(probe, gallery, k, workers=1):
    """Exact top-k (id, score) pairs, score descending then id ascending.

    ``workers`` > 1 scans shards on a thread pool; the merge consumes
    per-shard results in shard order, so the ranking is identical to the
    serial path.
    """
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    if gallery.size == 0:
        raise EmptyGallery("no embeddings enrolled")
    probe = np.asarray(probe, dtype=np.float64).ravel()
    if workers > 1 and len(gallery.shards) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(
                pool.map(lambda s: _scan_shard(s, probe, k), gallery.shards)
            )
    else:
        parts = [_scan_shard(s, probe, k) for s in gallery.shards]
    all_ids = np.concatenate([p[0] for p in parts])
    all_scores = np.concatenate([p[1] for p in parts])
    top_ids, top_scores = _top_candidates(
        all_ids, all_scores, min(k, all_scores.shape[0])
    )
    return [(int(i), float(s)) for i, s in zip(top_ids, top_scores)]


def search_batch(probes, gallery, k, workers=1):
    """Top-k for each probe row; a list of search_topk results."""
    probes = np.asarray(probes, dtype=np.float64)
    if probes.ndim != 2:
        raise ValueError(f"probes must be 2-D, got shape {probes.shape}")
    if gallery.size == 0:
        raise EmptyGallery("no embeddings enrolled")
    if workers > 1 and probes.shape[0] > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(
                pool.map(lambda p: search_topk(p, gallery, k), probes)
            )
    return [search_topk(p, gallery, k) for p in probes]
