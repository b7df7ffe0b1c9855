"""Seeded shard generation with inline embedding extraction.

Each shard draws its own latent stream from base_seed + shard_index,
runs the generator in eval mode (stored normalization statistics, so an
image depends only on its latent), and encodes every image in the same
evaluation pass.  Workers never share mutable state; completion order
cannot affect a byte of output.
"""

from __future__ import annotations

import os
from pathlib import Path
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..autodiff import evaluate, load_checkpoint, parameter
from ..gallery.shard import write_shard
from ..pgm import save_pgm
from .networks import (
    embedding_forward,
    generator_forward,
    parameter_nodes,
    parameter_shapes,
)


@dataclass(frozen=True)
class SynthesisJobSpec:
    """One generation campaign: shard layout, seeds, and checkpoints."""

    shard_count: int
    prints_per_shard: int
    base_seed: int
    out_dir: str
    generator_checkpoint: object
    encoder_checkpoint: object
    keep_images: bool = False
    batch_size: int = 256

    def __post_init__(self):
        if self.shard_count < 1 or self.prints_per_shard < 1:
            raise ValueError(
                f"need positive shard layout, got {self.shard_count} x "
                f"{self.prints_per_shard}"
            )


def _load_weights(source):
    if isinstance(source, dict):
        return source
    return load_checkpoint(source)


def shard_path(job, shard_index):
    return Path(job.out_dir) / f"shard_{shard_index:03d}.fpgs"


def generate_shard(job, shard_index, spec):
    """Produce one shard file; returns its path.

    Output bytes are a pure function of the job recipe, batch size
    included: different batch sizes can route matrix products through
    different accumulation kernels and move low-order float bits.

    Ids are global print indices (shard_index * prints_per_shard + i).
    With ``keep_images`` set, every print is also written as a PGM next
    to the shard.
    """
    if not 0 <= shard_index < job.shard_count:
        raise ValueError(f"shard index {shard_index} outside 0..{job.shard_count - 1}")
    weights = dict(_load_weights(job.generator_checkpoint))
    weights.update(_load_weights(job.encoder_checkpoint))
    os.makedirs(job.out_dir, exist_ok=True)
    image_dir = os.path.join(job.out_dir, f"shard_{shard_index:03d}_images")
    if job.keep_images:
        os.makedirs(image_dir, exist_ok=True)

    nodes = parameter_nodes(
        {**parameter_shapes(spec, "gen"), **parameter_shapes(spec, "emb")}
    )
    graphs = {}
    rng = np.random.default_rng(job.base_seed + shard_index)
    total = job.prints_per_shard
    embeddings = np.empty((total, spec.d_e), dtype=np.float32)
    ids = (
        np.uint64(shard_index) * np.uint64(total) + np.arange(total, dtype=np.uint64)
    )
    done = 0
    while done < total:
        b = min(job.batch_size, total - done)
        if b not in graphs:
            z = parameter("data/z", (b, spec.d_z))
            image, _ = generator_forward(spec, nodes, z, mode="eval")
            emb = embedding_forward(spec, nodes, image)
            graphs[b] = (image, emb)
        image_node, emb_node = graphs[b]
        bindings = dict(weights)
        bindings["data/z"] = rng.standard_normal((b, spec.d_z))
        images, batch_emb = evaluate([image_node, emb_node], bindings)
        embeddings[done : done + b] = batch_emb
        if job.keep_images:
            for i in range(b):
                name = f"print_{int(ids[done + i]):08d}.pgm"
                save_pgm(os.path.join(image_dir, name), images[i, 0])
        done += b
    write_shard(shard_path(job, shard_index), ids, embeddings)
    return shard_path(job, shard_index)


def generate_all_shards(job, spec, workers=1):
    """Every shard of the job; returns the list of paths in index order."""
    indices = range(job.shard_count)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(
                pool.map(lambda i: generate_shard(job, i, spec), indices)
            )
    return [generate_shard(job, i, spec) for i in indices]


def regenerate_leading_images(job, spec, count):
    """Images of the first ``count`` prints of shard 0, as one array.

    Walks shard 0's latent stream in the same batch blocks as
    generate_shard, so print i here is the same print the shard
    enrolled under id i (up to float noise from batch shape).
    """
    if not 1 <= count <= job.prints_per_shard:
        raise ValueError(
            f"count must be in 1..{job.prints_per_shard}, got {count}"
        )
    weights = dict(_load_weights(job.generator_checkpoint))
    rng = np.random.default_rng(job.base_seed)
    nodes = parameter_nodes(parameter_shapes(spec, "gen"))
    out = np.empty((count, 1, spec.extent, spec.extent), dtype=np.float32)
    done = 0
    graphs = {}
    while done < count:
        b = min(job.batch_size, job.prints_per_shard - done)
        z_values = rng.standard_normal((b, spec.d_z))
        take = min(b, count - done)
        if b not in graphs:
            z = parameter("data/z", (b, spec.d_z))
            image, _ = generator_forward(spec, nodes, z, mode="eval")
            graphs[b] = image
        bindings = dict(weights)
        bindings["data/z"] = z_values
        images = evaluate(graphs[b], bindings)
        out[done : done + take] = images[:take]
        done += take
    return out
