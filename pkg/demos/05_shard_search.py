"""Generate an embedding corpus in shards, then search it at scale.

A compact generator ladder synthesizes 100k prints straight into
fixed-width binary shards (id + unit-norm embedding; images are never
kept).  The search side memory-maps those shards and runs exact
cosine scans: top-k hits, identification-rate curves over nested
gallery sizes, a confidence interval across resampled distractor
folds, and a latency table.

About a minute, most of it shard generation.
"""

import shutil
import tempfile
import time
from pathlib import Path

import numpy as np

from printforge.gallery import (
    Gallery,
    benchmark_throughput,
    fold_confidence_interval,
    load_shard,
    rank_n_accuracy,
    search_topk,
)
from printforge.synthesis import (
    LadderSpec,
    SynthesisJobSpec,
    generate_all_shards,
    init_weights,
    parameter_shapes,
)


def make_probes(vectors, mate_rows, rng, sigma=0.05):
    """Noisy re-observations of gallery members, renormalized."""
    probes = vectors[mate_rows] + sigma * rng.standard_normal(
        (len(mate_rows), vectors.shape[1])
    )
    return probes / np.linalg.norm(probes, axis=1, keepdims=True)


def main():
    out_dir = Path(tempfile.mkdtemp(prefix="shard-demo-"))
    spec = LadderSpec.compact()
    job = SynthesisJobSpec(
        shard_count=4,
        prints_per_shard=25_000,
        base_seed=11,
        out_dir=out_dir,
        generator_checkpoint=init_weights(parameter_shapes(spec, "gen"), seed=1),
        encoder_checkpoint=init_weights(parameter_shapes(spec, "emb"), seed=2),
        batch_size=1024,
    )
    started = time.perf_counter()
    paths = generate_all_shards(job, spec)
    print(f"generated {job.shard_count} shards x {job.prints_per_shard} prints "
          f"in {time.perf_counter() - started:.1f}s")

    loaded = [load_shard(p) for p in paths]
    ids_all = np.concatenate([ids for ids, _ in loaded])
    vecs_all = np.concatenate([v.astype(np.float64) for _, v in loaded])
    rng = np.random.default_rng(42)
    mate_rows = np.arange(100)
    probes = make_probes(vecs_all, mate_rows, rng)
    mate_ids = ids_all[mate_rows]

    # Single probe against the full 100k gallery.
    gallery = Gallery.from_paths(paths)
    hits = search_topk(probes[0], gallery, k=3)
    print(f"\nfull gallery: {gallery.size} vectors, dim {gallery.dim}")
    print(f"probe for id {mate_ids[0]} -> top-3 {hits}")

    # Identification rate shrinks as the gallery grows.
    print("\nrank-1 / rank-5 by gallery size:")
    for size in (10_000, 50_000, 100_000):
        sub = Gallery.from_arrays([(ids_all[:size], vecs_all[:size])])
        curve = rank_n_accuracy(probes, mate_ids, sub, n_max=5)
        print(f"  {size:>7}: rank-1 {curve.at(1):.3f}  rank-5 {curve.at(5):.3f}")

    # Uncertainty: same mates, distractors resampled from the rest of
    # the corpus (random vectors would be too easy to reject).
    folds = []
    for f in range(5):
        lo = 25_000 + f * 15_000
        hi = lo + 15_000
        fold_ids = np.concatenate([mate_ids, ids_all[lo:hi]])
        fold_vecs = np.concatenate([vecs_all[mate_rows], vecs_all[lo:hi]])
        folds.append((fold_ids, fold_vecs))
    ci = fold_confidence_interval(probes, mate_ids, folds, n_max=1)
    print(f"\nrank-1 over {ci.fold_count} distractor folds: "
          f"{ci.mean[0]:.3f}  [{ci.lower[0]:.3f}, {ci.upper[0]:.3f}]")

    # Latency scaling: expect roughly 2x time per 2x gallery.
    rows = benchmark_throughput(
        gallery, probes[:4], sizes=(25_000, 50_000, 100_000), repetitions=3
    )
    print("\nsearch latency by gallery size:")
    for row in rows:
        print(f"  {row['size']:>7} @ {row['threads']} thread(s): "
              f"mean {row['mean_ms']:6.2f} ms  p95 {row['p95_ms']:6.2f} ms")

    shutil.rmtree(out_dir)


if __name__ == "__main__":
    main()
