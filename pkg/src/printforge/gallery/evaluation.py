"""Identification accuracy, fold intervals, and imposter statistics."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .search import Gallery, MissingMate, search_batch


class TooFewFolds(Exception):
    pass


class SingleIdentity(Exception):
    pass


@dataclass
class CMCCurve:
    """Rank-N identification accuracy for N = 1..len(accuracies)."""

    accuracies: np.ndarray

    def __post_init__(self):
        self.accuracies = np.asarray(self.accuracies, dtype=np.float64)

    def at(self, rank):
        return float(self.accuracies[rank - 1])

    def save_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["rank", "accuracy"])
            for i, a in enumerate(self.accuracies):
                writer.writerow([i + 1, f"{a:.6f}"])


def mate_ranks(probes, mate_ids, gallery, n_max, workers=1):
    """1-based rank of each probe's mate, or 0 when outside the top n_max."""
    mate_ids = [int(m) for m in mate_ids]
    enrolled = gallery.id_set()
    missing = sorted(set(mate_ids) - enrolled)
    if missing:
        raise MissingMate(f"mate ids not enrolled: {missing[:5]}")
    ranks = np.zeros(len(mate_ids), dtype=np.int64)
    results = search_batch(probes, gallery, n_max, workers=workers)
    for i, (result, mate) in enumerate(zip(results, mate_ids)):
        for position, (candidate, _) in enumerate(result, start=1):
            if candidate == mate:
                ranks[i] = position
                break
    return ranks


def rank_n_accuracy(probes, mate_ids, gallery, n_max, workers=1):
    """CMC over the probe set: fraction of mates found within rank N."""
    ranks = mate_ranks(probes, mate_ids, gallery, n_max, workers=workers)
    grid = np.arange(1, n_max + 1)
    found = ranks[ranks > 0]
    accuracies = (found[None, :] <= grid[:, None]).sum(axis=1) / len(mate_ids)
    return CMCCurve(accuracies=accuracies)


@dataclass
class FoldCI:
    """Normal-approximation interval of fold accuracies per rank."""

    ranks: np.ndarray
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    fold_count: int

    def save_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["rank", "mean", "lower", "upper"])
            for r, m, lo, hi in zip(self.ranks, self.mean, self.lower, self.upper):
                writer.writerow([int(r), f"{m:.6f}", f"{lo:.6f}", f"{hi:.6f}"])


def ci_from_fold_accuracies(accuracy_rows, ranks=None):
    """mean +- 1.96 * sample std / sqrt(k) per rank, clamped to [0, 1]."""
    rows = np.asarray(accuracy_rows, dtype=np.float64)
    if rows.ndim == 1:
        rows = rows[:, None]
    k = rows.shape[0]
    if k < 2:
        raise TooFewFolds(f"need at least 2 folds, got {k}")
    if ranks is None:
        ranks = np.arange(1, rows.shape[1] + 1)
    mean = rows.mean(axis=0)
    half = 1.96 * rows.std(axis=0, ddof=1) / np.sqrt(k)
    # std() centers on the float mean, so k identical accuracies can come
    # back ~1e-18 instead of 0; equal folds must give zero-width exactly.
    half[rows.max(axis=0) == rows.min(axis=0)] = 0.0
    return FoldCI(
        ranks=np.asarray(ranks),
        mean=mean,
        lower=np.clip(mean - half, 0.0, 1.0),
        upper=np.clip(mean + half, 0.0, 1.0),
        fold_count=k,
    )


def fold_confidence_interval(probes, mate_ids, fold_galleries, n_max, workers=1):
    """Per-rank CI over folds; each fold gallery must hold every mate.

    Folds share the probe set; each is typically the mated records plus
    a distinct distractor draw.  A fold may be a Gallery or a single
    (ids, vectors) pair.
    """
    fold_galleries = list(fold_galleries)
    if len(fold_galleries) < 2:
        raise TooFewFolds(f"need at least 2 folds, got {len(fold_galleries)}")
    rows = []
    for gallery in fold_galleries:
        if not isinstance(gallery, Gallery):
            gallery = Gallery.from_arrays([tuple(gallery)])
        curve = rank_n_accuracy(probes, mate_ids, gallery, n_max, workers=workers)
        rows.append(curve.accuracies)
    return ci_from_fold_accuracies(np.vstack(rows))


@dataclass
class ImposterStats:
    """Cross-identity score sample: moments plus a fixed-width histogram."""

    count: int
    mean: float
    std: float
    bin_edges: np.ndarray
    bin_counts: np.ndarray

    def save_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["bin_low", "bin_high", "count"])
            for lo, hi, c in zip(self.bin_edges[:-1], self.bin_edges[1:], self.bin_counts):
                writer.writerow([f"{lo:.6f}", f"{hi:.6f}", int(c)])


def score_statistics(scores, bin_width=0.05):
    """Moments and histogram of a raw score sample."""
    scores = np.asarray(scores, dtype=np.float64)
    n = scores.size
    mean = float(scores.mean()) if n else 0.0
    std = float(scores.std(ddof=1)) if n > 1 else 0.0
    low = np.floor(scores.min() / bin_width) * bin_width if n else 0.0
    high = np.ceil(scores.max() / bin_width) * bin_width if n else bin_width
    if high <= low:
        high = low + bin_width
    edges = np.arange(low, high + bin_width / 2, bin_width)
    counts, edges = np.histogram(scores, bins=edges)
    return ImposterStats(
        count=n, mean=mean, std=std, bin_edges=edges, bin_counts=counts
    )


def imposter_distribution(embeddings, identities, n_pairs=0, seed=0, bin_width=0.05):
    """Inner products of cross-identity pairs.

    ``n_pairs`` = 0 enumerates every cross-identity pair; otherwise that
    many pairs are sampled with replacement from the cross-identity set.
    """
    embeddings = np.asarray(embeddings, dtype=np.float64)
    identities = np.asarray(identities)
    if embeddings.shape[0] != identities.shape[0]:
        raise ValueError(
            f"{embeddings.shape[0]} embeddings but {identities.shape[0]} labels"
        )
    if np.unique(identities).size < 2:
        raise SingleIdentity("imposter pairs need at least two identities")
    n = embeddings.shape[0]
    if n_pairs == 0:
        iu, ju = np.triu_indices(n, k=1)
        cross = identities[iu] != identities[ju]
        iu, ju = iu[cross], ju[cross]
    else:
        rng = np.random.default_rng(seed)
        iu = np.empty(n_pairs, dtype=np.int64)
        ju = np.empty(n_pairs, dtype=np.int64)
        filled = 0
        while filled < n_pairs:
            a = rng.integers(0, n, size=n_pairs - filled)
            b = rng.integers(0, n, size=n_pairs - filled)
            keep = identities[a] != identities[b]
            take = int(keep.sum())
            iu[filled : filled + take] = a[keep]
            ju[filled : filled + take] = b[keep]
            filled += take
    scores = np.einsum("ij,ij->i", embeddings[iu], embeddings[ju])
    return score_statistics(scores, bin_width=bin_width)
