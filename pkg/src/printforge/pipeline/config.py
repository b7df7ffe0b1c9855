"""Experiment configuration with preset inheritance.

A run is described by one JSON document.  Missing keys inherit from the
named preset, so the desk and full configurations differ only by their
declared overrides and the full preset's training constants and layer
ladder survive verbatim into every manifest.
"""

from __future__ import annotations

import copy
import json
import os
from dataclasses import asdict, dataclass, field, fields

from ..synthesis import (
    LadderSpec,
    TrainSchedule,
    cae_schedule,
    finetune_schedule,
    gan_schedule,
    mixture_schedule,
)


class ConfigInvalid(Exception):
    """The configuration document cannot be resolved into a run plan."""


def _schedule_dict(schedule):
    d = asdict(schedule)
    d.pop("seed")
    return d


PRESETS = {
    "desk": {
        "seed": 0,
        "jobs": 1,
        "out_root": None,
        "model": {
            "ladder": "desk",
            "ablation": {"enabled": True, "seeds": [0, 1, 2, 3, 4], "eval_count": 256},
        },
        "corpus": {
            "count": 250,
            "extent": 96,
            "kinds": ["rolled", "plain"],
            "impressions_per_kind": 1,
            "iterations": 25,
            "lattice": 9,
            "noise_scale": 1.0,
            "batch": 64,
        },
        "schedules": {
            "cae": _schedule_dict(cae_schedule("desk")),
            "gan": _schedule_dict(gan_schedule("desk")),
            "finetune": _schedule_dict(finetune_schedule("desk")),
            "encoder": _schedule_dict(
                TrainSchedule(0.0002, 0.5, 0.9, batch_size=32, steps=1000)
            ),
            "mixture": _schedule_dict(mixture_schedule()),
        },
        "generate": {
            "shard_count": 8,
            "prints_per_shard": 2500,
            "batch_size": 256,
            "keep_images": False,
            "source": "gan",
        },
        "metrics": {"references": 3, "min_prints": 40},
        "gallery": {
            "n_max": 20,
            "mates": 48,
            "folds": 4,
            "imposter_pairs": 2000,
            "probe_noise": 0.08,
            "bench_sizes": [2500, 5000, 10000, 20000],
            "bench_repetitions": 3,
        },
    },
    "full": {
        "seed": 0,
        "jobs": 4,
        "out_root": None,
        "model": {
            "ladder": "full",
            "ablation": {"enabled": False, "seeds": [0, 1, 2, 3, 4], "eval_count": 256},
        },
        "corpus": {
            "count": 10000,
            "extent": 512,
            "kinds": ["rolled", "plain"],
            "impressions_per_kind": 1,
            "iterations": 25,
            "lattice": 9,
            "noise_scale": 1.0,
            "batch": 64,
        },
        "schedules": {
            "cae": _schedule_dict(cae_schedule("full")),
            "gan": _schedule_dict(gan_schedule("full")),
            "finetune": _schedule_dict(finetune_schedule("full")),
            "encoder": _schedule_dict(
                TrainSchedule(0.0002, 0.5, 0.9, batch_size=64, steps=20000)
            ),
            "mixture": _schedule_dict(mixture_schedule()),
        },
        "generate": {
            "shard_count": 100,
            "prints_per_shard": 1_000_000,
            "batch_size": 256,
            "keep_images": False,
            "source": "finetune",
        },
        "metrics": {"references": 3, "min_prints": 100},
        "gallery": {
            "n_max": 20,
            "mates": 1000,
            "folds": 10,
            "imposter_pairs": 10000,
            "probe_noise": 0.08,
            "bench_sizes": [125000, 250000, 500000, 1000000],
            "bench_repetitions": 5,
        },
    },
}

LADDERS = {
    "compact": LadderSpec.compact,
    "desk": LadderSpec.desk,
    "full": LadderSpec.full,
}


@dataclass(frozen=True)
class AblationConfig:
    enabled: bool
    seeds: tuple
    eval_count: int


@dataclass(frozen=True)
class ModelConfig:
    ladder: str
    ablation: AblationConfig

    def ladder_spec(self):
        return LADDERS[self.ladder]()


@dataclass(frozen=True)
class CorpusConfig:
    count: int
    extent: int
    kinds: tuple
    impressions_per_kind: int
    iterations: int
    lattice: int
    noise_scale: float
    batch: int


@dataclass(frozen=True)
class ScheduleSet:
    cae: TrainSchedule
    gan: TrainSchedule
    finetune: TrainSchedule
    encoder: TrainSchedule
    mixture: TrainSchedule


@dataclass(frozen=True)
class GenerateConfig:
    shard_count: int
    prints_per_shard: int
    batch_size: int
    keep_images: bool
    source: str


@dataclass(frozen=True)
class MetricsConfig:
    references: int
    min_prints: int


@dataclass(frozen=True)
class GalleryConfig:
    n_max: int
    mates: int
    folds: int
    imposter_pairs: int
    probe_noise: float
    bench_sizes: tuple
    bench_repetitions: int


@dataclass(frozen=True)
class ExperimentConfig:
    preset: str
    seed: int
    jobs: int
    out_root: str
    model: ModelConfig
    corpus: CorpusConfig
    schedules: ScheduleSet
    generate: GenerateConfig
    metrics: MetricsConfig
    gallery: GalleryConfig
    document: dict = field(compare=False, repr=False, default_factory=dict)

    def ladder_spec(self):
        return self.model.ladder_spec()


def _merge(base, overrides, path=""):
    """Recursive dict merge that rejects keys the preset does not know."""
    out = copy.deepcopy(base)
    for key, value in overrides.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigInvalid(f"unknown configuration key: {where}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigInvalid(f"{where} must be an object")
            out[key] = _merge(base[key], value, where)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _require(condition, message):
    if not condition:
        raise ConfigInvalid(message)


def _build_schedule(doc, seed, where):
    try:
        return TrainSchedule(seed=seed, **doc)
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid(f"bad schedule {where}: {exc}") from exc


def default_out_root(preset):
    return os.path.join("runs", preset)


def load_config(path=None, preset=None, seed=None, jobs=None, out_root=None):
    """Resolve a config document into a validated ExperimentConfig.

    Priority per field: CLI arguments, then the document, then the
    preset defaults.  The PRINTFORGE_OUT environment variable overrides
    the output root from any of those sources.
    """
    doc = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as handle:
                doc = json.load(handle)
        except OSError as exc:
            raise ConfigInvalid(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigInvalid(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigInvalid(f"config {path} must hold a JSON object")
    doc = copy.deepcopy(doc)
    chosen = preset or doc.pop("preset", "desk")
    if chosen not in PRESETS:
        raise ConfigInvalid(
            f"unknown preset {chosen!r}; expected one of {sorted(PRESETS)}"
        )
    merged = _merge(PRESETS[chosen], doc)
    if seed is not None:
        merged["seed"] = int(seed)
    if jobs is not None:
        merged["jobs"] = int(jobs)
    if out_root is not None:
        merged["out_root"] = out_root
    env_root = os.environ.get("PRINTFORGE_OUT")
    if env_root:
        merged["out_root"] = env_root
    if merged["out_root"] is None:
        merged["out_root"] = default_out_root(chosen)

    _require(isinstance(merged["seed"], int), "seed must be an integer")
    _require(
        isinstance(merged["jobs"], int) and merged["jobs"] >= 1,
        "jobs must be a positive integer",
    )

    model_doc = merged["model"]
    _require(
        model_doc["ladder"] in LADDERS,
        f"model.ladder must be one of {sorted(LADDERS)}",
    )
    ab = model_doc["ablation"]
    _require(
        isinstance(ab["seeds"], (list, tuple)) and len(ab["seeds"]) >= 1,
        "model.ablation.seeds must be a nonempty list",
    )
    _require(ab["eval_count"] >= 2, "model.ablation.eval_count must be at least 2")
    model = ModelConfig(
        ladder=model_doc["ladder"],
        ablation=AblationConfig(
            enabled=bool(ab["enabled"]),
            seeds=tuple(int(s) for s in ab["seeds"]),
            eval_count=int(ab["eval_count"]),
        ),
    )

    c = merged["corpus"]
    _require(c["count"] >= 1, "corpus.count must be positive")
    _require(c["extent"] >= 32, "corpus.extent must be at least 32")
    _require(
        c["kinds"] and all(k in ("rolled", "plain") for k in c["kinds"]),
        "corpus.kinds entries must be 'rolled' or 'plain'",
    )
    _require(c["impressions_per_kind"] >= 1, "corpus.impressions_per_kind must be positive")
    corpus = CorpusConfig(
        count=int(c["count"]),
        extent=int(c["extent"]),
        kinds=tuple(c["kinds"]),
        impressions_per_kind=int(c["impressions_per_kind"]),
        iterations=int(c["iterations"]),
        lattice=int(c["lattice"]),
        noise_scale=float(c["noise_scale"]),
        batch=int(c["batch"]),
    )

    base_seed = merged["seed"]
    sched_doc = merged["schedules"]
    schedules = ScheduleSet(
        cae=_build_schedule(sched_doc["cae"], base_seed + 1, "schedules.cae"),
        gan=_build_schedule(sched_doc["gan"], base_seed + 2, "schedules.gan"),
        finetune=_build_schedule(
            sched_doc["finetune"], base_seed + 3, "schedules.finetune"
        ),
        encoder=_build_schedule(
            sched_doc["encoder"], base_seed + 4, "schedules.encoder"
        ),
        mixture=_build_schedule(
            sched_doc["mixture"], base_seed + 5, "schedules.mixture"
        ),
    )

    g = merged["generate"]
    _require(g["shard_count"] >= 1, "generate.shard_count must be positive")
    _require(g["prints_per_shard"] >= 1, "generate.prints_per_shard must be positive")
    _require(
        g["source"] in ("gan", "finetune"),
        "generate.source must be 'gan' or 'finetune'",
    )
    generate = GenerateConfig(
        shard_count=int(g["shard_count"]),
        prints_per_shard=int(g["prints_per_shard"]),
        batch_size=int(g["batch_size"]),
        keep_images=bool(g["keep_images"]),
        source=g["source"],
    )

    m = merged["metrics"]
    _require(m["references"] >= 1, "metrics.references must be positive")
    _require(m["min_prints"] >= 4, "metrics.min_prints must be at least 4")
    metrics = MetricsConfig(
        references=int(m["references"]), min_prints=int(m["min_prints"])
    )

    ga = merged["gallery"]
    _require(ga["n_max"] >= 1, "gallery.n_max must be positive")
    _require(ga["mates"] >= 1, "gallery.mates must be positive")
    _require(ga["folds"] >= 2, "gallery.folds must be at least 2")
    _require(
        isinstance(ga["bench_sizes"], (list, tuple)) and len(ga["bench_sizes"]) >= 1,
        "gallery.bench_sizes must be a nonempty list",
    )
    gallery = GalleryConfig(
        n_max=int(ga["n_max"]),
        mates=int(ga["mates"]),
        folds=int(ga["folds"]),
        imposter_pairs=int(ga["imposter_pairs"]),
        probe_noise=float(ga["probe_noise"]),
        bench_sizes=tuple(int(s) for s in ga["bench_sizes"]),
        bench_repetitions=int(ga["bench_repetitions"]),
    )

    # total prints must cover the gallery protocol's mate set
    total = generate.shard_count * generate.prints_per_shard
    _require(
        gallery.mates <= total,
        f"gallery.mates ({gallery.mates}) exceeds generated prints ({total})",
    )
    _require(
        gallery.mates <= generate.prints_per_shard,
        "gallery.mates must fit inside shard 0",
    )

    merged["preset"] = chosen
    return ExperimentConfig(
        preset=chosen,
        seed=int(merged["seed"]),
        jobs=int(merged["jobs"]),
        out_root=merged["out_root"],
        model=model,
        corpus=corpus,
        schedules=schedules,
        generate=generate,
        metrics=metrics,
        gallery=gallery,
        document=merged,
    )


def config_snapshot(config):
    """The fully resolved document, as stored in the run manifest."""
    return copy.deepcopy(config.document)
