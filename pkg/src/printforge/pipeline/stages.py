"""Stage orchestration over one run directory.

Each stage owns exactly one subdirectory of the run, declares its
upstream stages, and is recorded in the run manifest with parameters,
wall-clock cost, and checksummed outputs.  A finished stage is a no-op
on rerun unless forced; a failed stage leaves its partial outputs
listed as invalid and surfaces as a nonzero exit.
"""

from __future__ import annotations

import json
import os
import shutil
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from glob import glob

import numpy as np
from skimage.transform import resize

from ..autodiff import constant, load_checkpoint, save_checkpoint
from ..fingerlab import compare_datasets, load_template
from ..gallery import (
    Gallery,
    benchmark_throughput,
    fold_confidence_interval,
    imposter_distribution,
    load_shard,
    rank_n_accuracy,
    save_latency_csv,
)
from ..masterprint import generate_corpus, load_manifest
from ..pgm import load_pgm
from ..synthesis import (
    SynthesisJobSpec,
    conv_architecture,
    embed_images,
    embedding_forward,
    finetune_plain,
    generate_shard,
    identity_ablation,
    init_generator_from_decoder,
    parameter_shapes,
    regenerate_leading_images,
    train_cae,
    train_identity_encoder,
    train_iwgan,
)
from .manifest import RunManifest


class MissingDependency(Exception):
    """An upstream stage has not completed in this run directory."""


class StageFailure(Exception):
    """A stage raised; partial outputs are recorded as invalid."""


STAGE_DIRS = {
    "corpus": "corpus",
    "train-encoder": "encoder",
    "train-cae": "cae",
    "train-gan": "gan",
    "finetune": "finetune",
    "generate": "shards",
    "metrics": "metrics",
    "gallery-eval": "gallery",
    "bench": "bench",
}

STAGES = tuple(STAGE_DIRS)


def stage_dependencies(stage, config):
    """Upstream stages that must be done before ``stage`` may run."""
    table = {
        "corpus": (),
        "train-encoder": ("corpus",),
        "train-cae": ("corpus",),
        "train-gan": ("train-cae", "train-encoder"),
        "finetune": ("train-gan", "corpus"),
        "generate": (
            "train-gan" if config.generate.source == "gan" else "finetune",
            "train-encoder",
        ),
        "metrics": ("corpus",),
        "gallery-eval": ("generate", "train-encoder"),
        "bench": ("generate",),
    }
    if stage not in table:
        raise ValueError(f"unknown stage {stage!r}; expected one of {STAGES}")
    return table[stage]


def _walk_files(root):
    found = []
    for base, _, names in os.walk(root):
        for name in names:
            found.append(os.path.join(base, name))
    return sorted(found)


def _stage_dir(run_dir, stage):
    return os.path.join(run_dir, STAGE_DIRS[stage])


def _schedule_params(schedule):
    d = asdict(schedule)
    d.pop("seed")
    return d


# ---------------------------------------------------------------------------
# Corpus loading helpers


def _load_training_images(corpus_dir, extent, kinds=None):
    """Stack corpus impressions as (n, 1, extent, extent) in [-1, 1].

    Impressions are resized when the corpus extent differs from the
    model's; labels are the identity ids, one per impression.
    """
    entries = load_manifest(os.path.join(corpus_dir, "manifest.json"))
    images, labels = [], []
    for entry in entries:
        if kinds is not None and entry["impression_kind"] not in kinds:
            continue
        img = load_pgm(os.path.join(corpus_dir, entry["image_path"]))
        if img.shape != (extent, extent):
            img = resize(img, (extent, extent), order=1, mode="reflect",
                         anti_aliasing=True)
            img = np.clip(img, -1.0, 1.0)
        images.append(img.astype(np.float32))
        labels.append(int(entry["identity_id"]))
    if not images:
        raise StageFailure(
            f"no corpus impressions of kind {kinds} under {corpus_dir}"
        )
    return np.asarray(images, dtype=np.float32)[:, None], np.asarray(labels)


def _adversarial_kinds(config):
    """Rolled impressions when present, otherwise whatever the corpus has."""
    kinds = config.corpus.kinds
    return ("rolled",) if "rolled" in kinds else tuple(kinds)


def _frozen_embedder(spec, encoder_weights):
    """Graph-level embedding of an image node against fixed weights."""
    emb_nodes = {
        name: constant(np.asarray(encoder_weights[name], dtype=np.float32))
        for name in parameter_shapes(spec, "emb")
    }
    return lambda x: embedding_forward(spec, emb_nodes, x)


def _synthesis_job(config, run_dir):
    source = "gan" if config.generate.source == "gan" else "finetune"
    return SynthesisJobSpec(
        shard_count=config.generate.shard_count,
        prints_per_shard=config.generate.prints_per_shard,
        base_seed=config.seed,
        out_dir=_stage_dir(run_dir, "generate"),
        generator_checkpoint=os.path.join(run_dir, source, "weights.npz"),
        encoder_checkpoint=os.path.join(run_dir, "encoder", "weights.npz"),
        keep_images=config.generate.keep_images,
        batch_size=config.generate.batch_size,
    )


def _shard_paths(run_dir):
    paths = sorted(glob(os.path.join(_stage_dir(run_dir, "generate"), "*.fpgs")))
    if not paths:
        raise StageFailure(f"no shards under {run_dir}")
    return paths


# ---------------------------------------------------------------------------
# Stage implementations: each returns (output paths, details dict)


def _stage_corpus(config, run_dir):
    out = _stage_dir(run_dir, "corpus")
    cc = config.corpus
    generate_corpus(
        out,
        cc.count,
        config.seed,
        extent=cc.extent,
        kinds=cc.kinds,
        impressions_per_kind=cc.impressions_per_kind,
        iterations=cc.iterations,
        lattice=cc.lattice,
        noise_scale=cc.noise_scale,
        batch=cc.batch,
        jobs=config.jobs,
    )
    entries = load_manifest(os.path.join(out, "manifest.json"))
    details = {"identities": cc.count, "impressions": len(entries)}
    return _walk_files(out), details


def _stage_train_encoder(config, run_dir):
    spec = config.ladder_spec()
    images, labels = _load_training_images(
        _stage_dir(run_dir, "corpus"), spec.extent
    )
    out = _stage_dir(run_dir, "train-encoder")
    os.makedirs(out, exist_ok=True)
    log_path = os.path.join(out, "log.csv")
    weights, rows = train_identity_encoder(
        images, labels, spec, config.schedules.encoder, log_path=log_path
    )
    weights_path = os.path.join(out, "weights.npz")
    save_checkpoint(weights_path, weights)
    details = {
        "images": int(images.shape[0]),
        "identities": int(np.unique(labels).size),
        "final_loss": float(rows[-1][1]) if rows else None,
    }
    return [weights_path, log_path], details


def _stage_train_cae(config, run_dir):
    spec = config.ladder_spec()
    images, _ = _load_training_images(
        _stage_dir(run_dir, "corpus"), spec.extent, kinds=_adversarial_kinds(config)
    )
    out = _stage_dir(run_dir, "train-cae")
    os.makedirs(out, exist_ok=True)
    log_path = os.path.join(out, "log.csv")
    weights, rows = train_cae(
        images, spec, config.schedules.cae, log_path=log_path
    )
    weights_path = os.path.join(out, "weights.npz")
    save_checkpoint(weights_path, weights)
    details = {
        "images": int(images.shape[0]),
        "first_loss": float(rows[0][1]) if rows else None,
        "final_loss": float(rows[-1][1]) if rows else None,
    }
    return [weights_path, log_path], details


def _write_ablation(out_dir, result):
    os.makedirs(out_dir, exist_ok=True)
    json_path = os.path.join(out_dir, "ablation.json")
    csv_path = os.path.join(out_dir, "ablation.csv")
    doc = {
        "seeds": list(result.seeds),
        "rows": result.rows(),
        "medians": {
            "distance_with": result.median_distance_with,
            "distance_without": result.median_distance_without,
            "cosine_with": result.median_cosine_with,
            "cosine_without": result.median_cosine_without,
        },
        "distance_increased": result.distance_increased(),
        "cosine_decreased": result.cosine_decreased(),
    }
    with open(json_path, "w", encoding="utf-8") as handle:
        json.dump(doc, handle, indent=1)
        handle.write("\n")
    header = [
        "seed", "distance_with", "distance_without", "cosine_with", "cosine_without",
    ]
    with open(csv_path, "w", encoding="utf-8", newline="") as handle:
        handle.write(",".join(header) + "\n")
        for row in result.rows():
            handle.write(",".join(f"{row[k]:.6f}" if k != "seed" else str(row[k])
                                  for k in header) + "\n")
        medians = doc["medians"]
        handle.write(
            "median,"
            + ",".join(
                f"{medians[k]:.6f}"
                for k in (
                    "distance_with", "distance_without",
                    "cosine_with", "cosine_without",
                )
            )
            + "\n"
        )
    return [json_path, csv_path], doc


def _stage_train_gan(config, run_dir):
    spec = config.ladder_spec()
    arch = conv_architecture(spec)
    images, _ = _load_training_images(
        _stage_dir(run_dir, "corpus"), spec.extent, kinds=_adversarial_kinds(config)
    )
    cae_weights = load_checkpoint(
        os.path.join(_stage_dir(run_dir, "train-cae"), "weights.npz")
    )
    encoder_weights = load_checkpoint(
        os.path.join(_stage_dir(run_dir, "train-encoder"), "weights.npz")
    )
    out = _stage_dir(run_dir, "train-gan")
    os.makedirs(out, exist_ok=True)
    log_path = os.path.join(out, "log.csv")
    weights, rows = train_iwgan(
        images,
        arch,
        config.schedules.gan,
        init=init_generator_from_decoder(cae_weights, spec),
        encoder_embed=_frozen_embedder(spec, encoder_weights),
        log_path=log_path,
    )
    weights_path = os.path.join(out, "weights.npz")
    save_checkpoint(weights_path, weights)
    outputs = [weights_path, log_path]
    details = {"images": int(images.shape[0])}
    if rows:
        step, d_loss, g_loss, gp, id_loss = rows[-1]
        details["final"] = {
            "step": int(step), "d_loss": float(d_loss), "g_loss": float(g_loss),
            "gp": float(gp), "id_loss": float(id_loss),
        }
    if config.model.ablation.enabled:
        mix = _schedule_params(config.schedules.mixture)
        mix.pop("identity_weight")
        result = identity_ablation(
            seeds=config.model.ablation.seeds,
            identity_weight=config.schedules.mixture.identity_weight,
            eval_count=config.model.ablation.eval_count,
            **mix,
        )
        paths, doc = _write_ablation(os.path.join(out, "mixture"), result)
        outputs.extend(paths)
        details["ablation"] = doc["medians"]
    return outputs, details


def _stage_finetune(config, run_dir):
    if "plain" not in config.corpus.kinds:
        raise StageFailure("finetune needs plain impressions in the corpus")
    spec = config.ladder_spec()
    arch = conv_architecture(spec)
    images, _ = _load_training_images(
        _stage_dir(run_dir, "corpus"), spec.extent, kinds=("plain",)
    )
    gan_weights = load_checkpoint(
        os.path.join(_stage_dir(run_dir, "train-gan"), "weights.npz")
    )
    encoder_weights = load_checkpoint(
        os.path.join(_stage_dir(run_dir, "train-encoder"), "weights.npz")
    )
    out = _stage_dir(run_dir, "finetune")
    os.makedirs(out, exist_ok=True)
    log_path = os.path.join(out, "log.csv")
    weights, rows = finetune_plain(
        gan_weights,
        images,
        arch,
        config.schedules.finetune,
        encoder_embed=_frozen_embedder(spec, encoder_weights),
        log_path=log_path,
    )
    weights_path = os.path.join(out, "weights.npz")
    save_checkpoint(weights_path, weights)
    details = {"images": int(images.shape[0])}
    if rows:
        details["final_d_loss"] = float(rows[-1][1])
    return [weights_path, log_path], details


def _stage_generate(config, run_dir):
    spec = config.ladder_spec()
    job = _synthesis_job(config, run_dir)

    def timed(index):
        start = time.perf_counter()
        path = generate_shard(job, index, spec)
        return index, str(path), time.perf_counter() - start

    indices = range(job.shard_count)
    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            timings = list(pool.map(timed, indices))
    else:
        timings = [timed(i) for i in indices]
    details = {
        "prints": job.shard_count * job.prints_per_shard,
        "source": config.generate.source,
        "shards": [
            {"index": i, "path": os.path.basename(p), "elapsed_s": round(t, 3)}
            for i, p, t in timings
        ],
    }
    return _walk_files(job.out_dir), details


def _stage_metrics(config, run_dir):
    corpus_dir = _stage_dir(run_dir, "corpus")
    entries = load_manifest(os.path.join(corpus_dir, "manifest.json"))
    n_groups = config.metrics.references + 1
    groups = [([], []) for _ in range(n_groups)]
    for entry in entries:
        images, templates = groups[int(entry["identity_id"]) % n_groups]
        img = load_pgm(os.path.join(corpus_dir, entry["image_path"]))
        images.append((img + 1.0) / 2.0)
        templates.append(
            load_template(os.path.join(corpus_dir, entry["template_path"]))
        )
    report = compare_datasets(
        groups[0], groups[1:], min_prints=config.metrics.min_prints
    )
    out = _stage_dir(run_dir, "metrics")
    os.makedirs(out, exist_ok=True)
    json_path = os.path.join(out, "report.json")
    csv_path = os.path.join(out, "report.csv")
    report.save_json(json_path)
    report.save_csv(csv_path)
    details = {
        "candidate_prints": len(groups[0][0]),
        "reference_prints": [len(g[0]) for g in groups[1:]],
        "average_ks": {row["indicator"]: row["mean"] for row in report.rows},
    }
    return [json_path, csv_path], details


def _stage_gallery_eval(config, run_dir):
    spec = config.ladder_spec()
    gc = config.gallery
    shard_files = _shard_paths(run_dir)
    gallery = Gallery.from_paths(shard_files)
    encoder_weights = load_checkpoint(
        os.path.join(_stage_dir(run_dir, "train-encoder"), "weights.npz")
    )

    # Mated probes: re-render the first prints of shard 0, perturb the
    # pixels, and embed the noisy copies.  Their mate in the gallery is
    # the clean print they were regenerated from.
    job = _synthesis_job(config, run_dir)
    images = regenerate_leading_images(job, spec, gc.mates)
    rng = np.random.default_rng(config.seed + 77)
    noisy = images + gc.probe_noise * rng.standard_normal(images.shape)
    noisy = np.clip(noisy, -1.0, 1.0).astype(np.float32)
    probes = embed_images(spec, encoder_weights, noisy)
    mate_ids = np.arange(gc.mates, dtype=np.uint64)

    out = _stage_dir(run_dir, "gallery-eval")
    os.makedirs(out, exist_ok=True)
    curve = rank_n_accuracy(probes, mate_ids, gallery, gc.n_max, workers=config.jobs)
    cmc_path = os.path.join(out, "cmc.csv")
    curve.save_csv(cmc_path)

    # Fold galleries: every mate plus one of ``folds`` distractor
    # slices, so each fold searches the same probes against a different
    # distractor population.
    loaded = [load_shard(p) for p in shard_files]
    ids_all = np.concatenate([ids for ids, _ in loaded])
    vecs_all = np.vstack([vecs for _, vecs in loaded])
    fold_galleries = []
    for f in range(gc.folds):
        keep = (ids_all < gc.mates) | (ids_all % np.uint64(gc.folds) == f)
        fold_galleries.append((ids_all[keep], vecs_all[keep]))
    ci = fold_confidence_interval(
        probes, mate_ids, fold_galleries, gc.n_max, workers=config.jobs
    )
    ci_path = os.path.join(out, "fold_ci.csv")
    ci.save_csv(ci_path)

    # Imposter scores between distinct prints, each its own identity.
    stats = imposter_distribution(
        vecs_all, ids_all, n_pairs=gc.imposter_pairs, seed=config.seed
    )
    imp_path = os.path.join(out, "imposter.csv")
    stats.save_csv(imp_path)

    summary = {
        "gallery_size": int(gallery.size),
        "probes": int(gc.mates),
        "n_max": int(gc.n_max),
        "rank1": curve.at(1),
        "accuracies": [float(a) for a in curve.accuracies],
        "folds": int(gc.folds),
        "rank1_ci": {
            "mean": float(ci.mean[0]),
            "lower": float(ci.lower[0]),
            "upper": float(ci.upper[0]),
        },
        "imposter": {
            "count": int(stats.count),
            "mean": float(stats.mean),
            "std": float(stats.std),
        },
    }
    summary_path = os.path.join(out, "summary.json")
    with open(summary_path, "w", encoding="utf-8") as handle:
        json.dump(summary, handle, indent=1)
        handle.write("\n")
    details = {"rank1": summary["rank1"], "imposter_mean": stats.mean}
    return [cmc_path, ci_path, imp_path, summary_path], details


def _stage_bench(config, run_dir):
    gallery = Gallery.from_paths(_shard_paths(run_dir))
    sizes = [s for s in config.gallery.bench_sizes if s <= gallery.size]
    dropped = [s for s in config.gallery.bench_sizes if s > gallery.size]
    if not sizes:
        sizes = [gallery.size]
    first_ids, first_vecs = gallery.shards[0]
    probes = first_vecs[: min(16, first_vecs.shape[0])]
    threads = (1,) if config.jobs == 1 else (1, config.jobs)
    rows = benchmark_throughput(
        gallery,
        probes,
        sizes,
        repetitions=config.gallery.bench_repetitions,
        thread_counts=threads,
    )
    out = _stage_dir(run_dir, "bench")
    os.makedirs(out, exist_ok=True)
    csv_path = os.path.join(out, "latency.csv")
    save_latency_csv(rows, csv_path)
    summary = {
        "cores": os.cpu_count(),
        "probes": int(probes.shape[0]),
        "dropped_sizes": dropped,
        "rows": rows,
    }
    summary_path = os.path.join(out, "summary.json")
    with open(summary_path, "w", encoding="utf-8") as handle:
        json.dump(summary, handle, indent=1)
        handle.write("\n")
    return [csv_path, summary_path], {"rows": rows}


_STAGE_IMPLS = {
    "corpus": _stage_corpus,
    "train-encoder": _stage_train_encoder,
    "train-cae": _stage_train_cae,
    "train-gan": _stage_train_gan,
    "finetune": _stage_finetune,
    "generate": _stage_generate,
    "metrics": _stage_metrics,
    "gallery-eval": _stage_gallery_eval,
    "bench": _stage_bench,
}


def _stage_parameters(stage, config):
    base = {"seed": config.seed, "jobs": config.jobs}
    if stage == "corpus":
        return {**base, **asdict(config.corpus)}
    if stage == "train-encoder":
        return {**base, "ladder": config.model.ladder,
                "schedule": _schedule_params(config.schedules.encoder)}
    if stage == "train-cae":
        return {**base, "ladder": config.model.ladder,
                "schedule": _schedule_params(config.schedules.cae)}
    if stage == "train-gan":
        params = {**base, "ladder": config.model.ladder,
                  "schedule": _schedule_params(config.schedules.gan)}
        if config.model.ablation.enabled:
            params["ablation"] = asdict(config.model.ablation)
            params["mixture_schedule"] = _schedule_params(config.schedules.mixture)
        return params
    if stage == "finetune":
        return {**base, "ladder": config.model.ladder,
                "schedule": _schedule_params(config.schedules.finetune)}
    if stage == "generate":
        return {**base, **asdict(config.generate)}
    if stage == "metrics":
        return {**base, **asdict(config.metrics)}
    if stage in ("gallery-eval", "bench"):
        return {**base, **asdict(config.gallery)}
    raise ValueError(f"unknown stage {stage!r}")


def run_stage(stage, config, force=False):
    """Run one stage against the configured run directory.

    Returns "done" after a successful run and "skipped" when the stage
    already completed and ``force`` is unset.  Raises MissingDependency
    when upstream stages are not done, StageFailure when the stage
    itself breaks.
    """
    if stage not in _STAGE_IMPLS:
        raise ValueError(f"unknown stage {stage!r}; expected one of {STAGES}")
    run_dir = config.out_root
    manifest = RunManifest.open_or_create(run_dir, config)
    for dep in stage_dependencies(stage, config):
        if manifest.stage_status(dep) != "done":
            raise MissingDependency(
                f"stage {stage!r} needs {dep!r} completed in {run_dir}"
            )
    if manifest.stage_status(stage) == "done" and not force:
        return "skipped"

    stage_dir = _stage_dir(run_dir, stage)
    if os.path.isdir(stage_dir):
        shutil.rmtree(stage_dir)
    params = _stage_parameters(stage, config)
    start = time.perf_counter()
    try:
        outputs, details = _STAGE_IMPLS[stage](config, run_dir)
    except Exception as exc:
        elapsed = time.perf_counter() - start
        partial = _walk_files(stage_dir) if os.path.isdir(stage_dir) else []
        manifest.record_failure(stage, params, partial, elapsed, exc)
        raise StageFailure(f"stage {stage!r} failed: {exc}") from exc
    elapsed = time.perf_counter() - start
    manifest.record_stage(stage, params, outputs, elapsed, details)
    return "done"
