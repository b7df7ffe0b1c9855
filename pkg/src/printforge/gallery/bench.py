"""Search latency measurement across gallery sizes and thread counts."""

from __future__ import annotations

import csv
import os
import time

import numpy as np

from .search import Gallery, search_topk


def _prefix_gallery(gallery, size):
    """First ``size`` rows across shards, in shard order."""
    shards = []
    remaining = size
    for ids, vectors in gallery.shards:
        if remaining <= 0:
            break
        take = min(remaining, vectors.shape[0])
        shards.append((ids[:take], vectors[:take]))
        remaining -= take
    if remaining > 0:
        raise ValueError(f"gallery holds {gallery.size} rows, need {size}")
    return Gallery(shards=shards)


def benchmark_throughput(
    gallery,
    probes,
    sizes,
    repetitions=5,
    thread_counts=None,
    k=1,
):
    """Per-probe top-k latency table.

    Rows are dicts (size, threads, mean_ms, p95_ms); each cell times
    every probe ``repetitions`` times and keeps the per-probe minimum,
    damping scheduler noise.
    """
    probes = np.asarray(probes, dtype=np.float64)
    if thread_counts is None:
        cores = os.cpu_count() or 1
        thread_counts = (1,) if cores == 1 else (1, cores)
    rows = []
    for size in sizes:
        sub = _prefix_gallery(gallery, size)
        for threads in thread_counts:
            best = np.full(probes.shape[0], np.inf)
            for _ in range(repetitions):
                for i, probe in enumerate(probes):
                    start = time.perf_counter()
                    search_topk(probe, sub, k, workers=threads)
                    elapsed = (time.perf_counter() - start) * 1000.0
                    best[i] = min(best[i], elapsed)
            rows.append(
                {
                    "size": int(size),
                    "threads": int(threads),
                    "mean_ms": float(best.mean()),
                    "p95_ms": float(np.percentile(best, 95)),
                }
            )
    return rows


def save_latency_csv(rows, path):
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["size", "threads", "mean_ms", "p95_ms"])
        for row in rows:
            writer.writerow(
                [
                    row["size"],
                    row["threads"],
                    f"{row['mean_ms']:.4f}",
                    f"{row['p95_ms']:.4f}",
                ]
            )
