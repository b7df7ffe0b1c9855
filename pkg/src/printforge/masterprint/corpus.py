"""Masterprint records and corpus generation with ground truth.

A corpus directory holds PGM impressions, per-identity template JSON,
and a manifest: a JSON array of
{identity_id, class, impression_kind, image_path, template_path, seed}
with paths relative to the manifest.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..fingerlab.extraction import extract_minutiae, segment_foreground
from ..fingerlab.orientation import estimate_orientation
from ..fingerlab.templates import save_template
from ..pgm import save_pgm
from .impressions import foreground_mask, render_impression
from .orientation import class_singularities, sample_class, zero_pole_orientation
from .ridges import gabor_grow_batch, sample_frequency


@dataclass
class MasterPrintRecord:
    identity_id: int
    label: str
    ridge_image: np.ndarray  # (H, W) in [-1, 1], ridges at +1
    field: object  # OrientationField
    freq: object  # RidgeFrequencyMap
    seed: int
    template: object = None  # ground-truth MinutiaTemplate, lazily filled


def ground_truth_minutiae(record, border=8):
    """Extract the reference template from the noise-free masterprint.

    Runs the shared extraction core on the clean render, with angles
    taken from the record's own orientation field rather than an
    estimate.  Quality still comes from measured coherence.
    """
    ridge = np.asarray(record.ridge_image, dtype=np.float64)
    extent = ridge.shape[0]
    ink = np.clip((1.0 - ridge) / 2.0, 0.0, 1.0)  # dark ridges
    mask = (foreground_mask(extent, "rolled", rng=None) > 0.5) & segment_foreground(ink)
    _, coherence = estimate_orientation(ink)
    return extract_minutiae(
        ink,
        mask=mask,
        orientation=record.field.angles,
        coherence=coherence,
        border=border,
    )


def generate_record(
    identity_id,
    seed,
    extent=128,
    label=None,
    iterations=25,
    lattice=9,
    with_template=True,
):
    """Grow one masterprint deterministically from (identity_id, seed)."""
    records = generate_records(
        [(identity_id, seed)],
        extent=extent,
        labels=None if label is None else [label],
        iterations=iterations,
        lattice=lattice,
        with_template=with_template,
    )
    return records[0]


def generate_records(
    id_seed_pairs,
    extent=128,
    labels=None,
    iterations=25,
    lattice=9,
    with_template=True,
):
    """Batch masterprint growth; one record per (identity_id, seed)."""
    fields = []
    freqs = []
    grow_seeds = []
    metas = []
    for slot, (identity_id, seed) in enumerate(id_seed_pairs):
        root = np.random.SeedSequence([int(seed), int(identity_id)])
        cls_seed, sing_seed, freq_seed, grow_seed = root.spawn(4)
        if labels is not None:
            label = labels[slot]
        else:
            label = sample_class(np.random.default_rng(cls_seed))
        config = class_singularities(label, sing_seed, extent)
        fields.append(zero_pole_orientation(config, extent))
        freqs.append(sample_frequency(freq_seed, extent, lattice=lattice))
        grow_seeds.append(grow_seed)
        metas.append((identity_id, seed, label))
    images = gabor_grow_batch(fields, freqs, grow_seeds, iterations=iterations)
    records = []
    for slot, (identity_id, seed, label) in enumerate(metas):
        record = MasterPrintRecord(
            identity_id=int(identity_id),
            label=label,
            ridge_image=images[slot],
            field=fields[slot],
            freq=freqs[slot],
            seed=int(seed),
        )
        if with_template:
            record.template = ground_truth_minutiae(record)
        records.append(record)
    return records


def _impression_seed(seed, identity_id, kind, index):
    kinds = {"rolled": 0, "plain": 1}
    root = np.random.SeedSequence([int(seed), int(identity_id), kinds[kind], index])
    return root


def _corpus_batch(args):
    (ids, seed, extent, labels, iterations, lattice, kinds, per_kind, noise, out_dir) = args
    pairs = [(identity, seed) for identity in ids]
    records = generate_records(
        pairs, extent=extent, labels=labels, iterations=iterations, lattice=lattice
    )
    entries = []
    for record in records:
        template_path = f"templates/id{record.identity_id:06d}.json"
        save_template(os.path.join(out_dir, template_path), record.template)
        for kind in kinds:
            for index in range(per_kind):
                image = render_impression(
                    record,
                    kind,
                    _impression_seed(seed, record.identity_id, kind, index),
                    noise_scale=noise,
                )
                image_path = (
                    f"images/id{record.identity_id:06d}_{kind}_{index:02d}.pgm"
                )
                save_pgm(os.path.join(out_dir, image_path), image * 2.0 - 1.0)
                entries.append(
                    {
                        "identity_id": record.identity_id,
                        "class": record.label,
                        "impression_kind": kind,
                        "image_path": image_path,
                        "template_path": template_path,
                        "seed": record.seed,
                    }
                )
    return entries


def generate_corpus(
    out_dir,
    count,
    seed,
    extent=128,
    kinds=("rolled", "plain"),
    impressions_per_kind=1,
    iterations=25,
    lattice=9,
    noise_scale=1.0,
    batch=64,
    jobs=1,
):
    """Generate ``count`` identities with impressions and ground truth.

    Deterministic for a fixed (seed, settings) regardless of jobs;
    batches are independent and collected in order.  Returns the
    manifest path.
    """
    os.makedirs(os.path.join(out_dir, "images"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "templates"), exist_ok=True)
    batches = []
    for start in range(0, count, batch):
        ids = list(range(start, min(start + batch, count)))
        batches.append(
            (ids, seed, extent, None, iterations, lattice, tuple(kinds),
             impressions_per_kind, noise_scale, out_dir)
        )
    entries = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for chunk in pool.map(_corpus_batch, batches):
                entries.extend(chunk)
    else:
        for spec in batches:
            entries.extend(_corpus_batch(spec))
    manifest_path = os.path.join(out_dir, "manifest.json")
    with open(manifest_path, "w", encoding="utf-8") as handle:
        json.dump(entries, handle, indent=1)
        handle.write("\n")
    return manifest_path


def load_manifest(path):
    with open(path, "r", encoding="utf-8") as handle:
        entries = json.load(handle)
    if not isinstance(entries, list):
        raise ValueError(f"manifest {path} is not a JSON array")
    return entries
