"""Seeded training loops over the autodiff graphs.

Every loop builds its step graph once, then rebinds data and weights
each iteration; the graphs stay fixed-shape because batches are drawn
with replacement.  All randomness flows from the schedule seed, so a
(corpus, schedule) pair reproduces its run bit for bit.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from ..autodiff import (
    AdamState,
    adam_step,
    add,
    constant,
    derive,
    evaluate,
    load_checkpoint,
    mul_scalar,
    parameter,
    reduce_mean,
    square,
    sub,
)
from .losses import (
    critic_loss,
    generator_adversarial_loss,
    gradient_penalty_node,
    identity_loss,
)
from .networks import (
    ArchitectureMismatch,
    classifier_head,
    embedding_forward,
    encoder_forward,
    generator_forward,
    init_weights,
    parameter_nodes,
    parameter_shapes,
    trainable_names,
)


class EmptyCorpus(Exception):
    pass


class NonFiniteLoss(Exception):
    """Training hit a NaN or infinity; message carries the step."""


class InsufficientLabels(Exception):
    pass


@dataclass(frozen=True)
class TrainSchedule:
    """Optimizer constants plus loop lengths for one training phase."""

    lr: float
    beta1: float
    beta2: float
    batch_size: int
    steps: int
    n_critic: int = 5
    gp_weight: float = 10.0
    identity_weight: float = 0.1
    bn_momentum: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0 or not (0 <= self.beta1 < 1) or not (0 <= self.beta2 < 1):
            raise ValueError(
                f"bad schedule lr={self.lr} beta1={self.beta1} beta2={self.beta2}"
            )
        if self.batch_size < 1 or self.steps < 0 or self.n_critic < 1:
            raise ValueError(
                f"bad schedule batch={self.batch_size} steps={self.steps} "
                f"n_critic={self.n_critic}"
            )


def cae_schedule(preset="full", **overrides):
    base = {
        "full": TrainSchedule(0.0002, 0.5, 0.9, batch_size=128, steps=39000),
        "desk": TrainSchedule(0.0002, 0.5, 0.9, batch_size=32, steps=2000),
    }[preset]
    return replace(base, **overrides) if overrides else base


def gan_schedule(preset="full", **overrides):
    base = {
        "full": TrainSchedule(0.0001, 0.0, 0.9, batch_size=32, steps=54000),
        "desk": TrainSchedule(0.0001, 0.0, 0.9, batch_size=16, steps=2000),
    }[preset]
    return replace(base, **overrides) if overrides else base


def finetune_schedule(preset="full", **overrides):
    base = {
        "full": TrainSchedule(0.0001, 0.0, 0.9, batch_size=32, steps=37000),
        "desk": TrainSchedule(0.0001, 0.0, 0.9, batch_size=16, steps=2000),
    }[preset]
    return replace(base, **overrides) if overrides else base


def mixture_schedule(**overrides):
    """Point-data preset: fast enough to ablate in minutes."""
    base = TrainSchedule(
        0.0002, 0.0, 0.9, batch_size=64, steps=500, n_critic=5, gp_weight=10.0
    )
    return replace(base, **overrides) if overrides else base


def sample_ring_mixture(seed, count, modes=8, radius=2.0, std=0.05):
    """Planar Gaussian mixture with modes evenly spaced on a circle."""
    rng = np.random.default_rng(seed)
    which = rng.integers(0, modes, size=count)
    angles = 2.0 * np.pi * which / modes
    centers = np.stack([radius * np.cos(angles), radius * np.sin(angles)], axis=1)
    return (centers + rng.normal(0.0, std, size=(count, 2))).astype(np.float32)


# ---------------------------------------------------------------------------
# Shared helpers


def reconstruction_loss(x, reconstruction):
    """Mean squared residual over every element of the batch."""
    return reduce_mean(square(sub(x, reconstruction)))


def _as_image_batch(corpus, extent):
    data = np.asarray(corpus, dtype=np.float32)
    if data.ndim == 3:
        data = data[:, None, :, :]
    if data.ndim != 4 or data.shape[1] != 1 or data.shape[2:] != (extent, extent):
        raise ValueError(
            f"corpus shape {np.shape(corpus)} does not match 1x{extent}x{extent} images"
        )
    return data


def _merge_init(shapes, seed, init):
    weights = init_weights(shapes, seed=seed)
    if init:
        for name, value in init.items():
            if name not in shapes:
                raise ArchitectureMismatch(f"unexpected tensor {name!r}")
            if tuple(np.shape(value)) != tuple(shapes[name]):
                raise ArchitectureMismatch(
                    f"{name!r} has shape {np.shape(value)}, expected {shapes[name]}"
                )
            weights[name] = np.array(value, dtype=np.float32)
    return weights


def _update_running(weights, names, values, momentum):
    for name, (mean_v, var_v) in zip(names, values):
        for suffix, batch_stat in (("/mean", mean_v), ("/var", var_v)):
            key = name + suffix
            weights[key] = (
                momentum * weights[key] + (1.0 - momentum) * batch_stat
            ).astype(np.float32)


def _check_finite(value, step, label):
    if not np.isfinite(value):
        raise NonFiniteLoss(f"{label} became {value!r} at step {step}")


def _write_log(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)


def _stat_outputs(stats):
    """Flatten {name: (mean, var)} into parallel name/node lists."""
    names = sorted(stats)
    nodes = []
    for name in names:
        nodes.extend(stats[name])
    return names, nodes


def _split_stats(values):
    return [(values[i], values[i + 1]) for i in range(0, len(values), 2)]


# ---------------------------------------------------------------------------
# Convolutional autoencoder


def train_cae(corpus, spec, schedule, init=None, log_path=None):
    """Train encoder plus decoder on reconstruction; returns (weights, log).

    The log holds (step, loss) pairs.  Weights carry both halves under
    the ``enc/`` and ``gen/`` prefixes, the latter ready to seed a
    generator.
    """
    data = _as_image_batch(corpus, spec.extent)
    if data.shape[0] == 0:
        raise EmptyCorpus("no training images")
    shapes = {**parameter_shapes(spec, "enc"), **parameter_shapes(spec, "gen")}
    weights = _merge_init(shapes, schedule.seed, init)

    batch = schedule.batch_size
    x = parameter("data/x", (batch, 1, spec.extent, spec.extent))
    nodes = parameter_nodes(shapes)
    latent, enc_stats = encoder_forward(spec, nodes, x, "train")
    restored, gen_stats = generator_forward(spec, nodes, latent, "train")
    loss = reconstruction_loss(x, restored)
    train = trainable_names(shapes)
    grads = derive(loss, [nodes[n] for n in train])
    stat_names, stat_nodes = _stat_outputs({**enc_stats, **gen_stats})

    optimizer = AdamState.fresh(
        {n: weights[n] for n in train}, schedule.lr, schedule.beta1, schedule.beta2
    )
    rng = np.random.default_rng(schedule.seed)
    rows = []
    for step in range(schedule.steps):
        idx = rng.integers(0, data.shape[0], size=batch)
        bindings = dict(weights)
        bindings["data/x"] = data[idx]
        values = evaluate([loss] + grads + stat_nodes, bindings, check_finite=False)
        loss_value = float(values[0])
        _check_finite(loss_value, step, "reconstruction loss")
        adam_step(weights, dict(zip(train, values[1 : 1 + len(train)])), optimizer)
        _update_running(
            weights,
            stat_names,
            _split_stats(values[1 + len(train) :]),
            schedule.bn_momentum,
        )
        rows.append((step, loss_value))
    if log_path is not None:
        _write_log(log_path, ["step", "loss"], rows)
    return weights, rows


def init_generator_from_decoder(cae_weights, spec):
    """Decoder tensors of a trained autoencoder, keyed for the generator.

    Accepts a weight dict or a checkpoint path.  Every ``gen/`` tensor
    must exist with exactly the target shape.
    """
    if not isinstance(cae_weights, dict):
        cae_weights = load_checkpoint(cae_weights)
    expected = parameter_shapes(spec, "gen")
    found = {k: v for k, v in cae_weights.items() if k.startswith("gen/")}
    missing = sorted(set(expected) - set(found))
    if missing:
        raise ArchitectureMismatch(f"decoder lacks tensors {missing}")
    out = {}
    for name, shape in expected.items():
        value = found[name]
        if tuple(value.shape) != tuple(shape):
            raise ArchitectureMismatch(
                f"{name!r} has shape {value.shape}, generator expects {shape}"
            )
        out[name] = np.array(value, dtype=np.float32)
    return out


# ---------------------------------------------------------------------------
# Identity embedder


def train_identity_encoder(images, labels, spec, schedule, log_path=None):
    """Fit the embedder by regressing one-hot labels from embeddings.

    Each identity needs at least two images.  Returns (weights, log);
    the classifier head stays in the weights but embedding use ignores
    it.
    """
    data = _as_image_batch(images, spec.extent)
    labels = np.asarray(labels)
    if data.shape[0] != labels.shape[0]:
        raise ValueError(f"{data.shape[0]} images but {labels.shape[0]} labels")
    unique, inverse, counts = np.unique(labels, return_inverse=True, return_counts=True)
    if unique.size < 2:
        raise InsufficientLabels(f"need at least 2 identities, got {unique.size}")
    if counts.min() < 2:
        worst = unique[counts.argmin()]
        raise InsufficientLabels(f"identity {worst!r} has {counts.min()} image(s)")
    n_classes = unique.size
    onehot = np.eye(n_classes, dtype=np.float32)[inverse]

    shapes = parameter_shapes(spec, "emb", n_classes=n_classes)
    weights = init_weights(shapes, seed=schedule.seed)
    batch = schedule.batch_size
    x = parameter("data/x", (batch, 1, spec.extent, spec.extent))
    y = parameter("data/y", (batch, n_classes))
    nodes = parameter_nodes(shapes)
    emb = embedding_forward(spec, nodes, x)
    loss = reduce_mean(square(sub(classifier_head(nodes, emb), y)))
    train = trainable_names(shapes)
    grads = derive(loss, [nodes[n] for n in train])

    optimizer = AdamState.fresh(
        {n: weights[n] for n in train}, schedule.lr, schedule.beta1, schedule.beta2
    )
    rng = np.random.default_rng(schedule.seed)
    rows = []
    for step in range(schedule.steps):
        idx = rng.integers(0, data.shape[0], size=batch)
        bindings = dict(weights)
        bindings["data/x"] = data[idx]
        bindings["data/y"] = onehot[idx]
        values = evaluate([loss] + grads, bindings, check_finite=False)
        loss_value = float(values[0])
        _check_finite(loss_value, step, "classification loss")
        adam_step(weights, dict(zip(train, values[1:])), optimizer)
        rows.append((step, loss_value))
    if log_path is not None:
        _write_log(log_path, ["step", "loss"], rows)
    return weights, rows


def embedding_node(spec, weights, x):
    """Frozen embedder applied to an image node; gradients flow only to x."""
    consts = {
        name: constant(np.asarray(weights[name]), name=name)
        for name in parameter_shapes(spec, "emb")
    }
    return embedding_forward(spec, consts, x)


def embed_images(spec, weights, images, batch_size=64):
    """Embeddings of concrete images, shape (n, d_e) float32."""
    data = _as_image_batch(images, spec.extent)
    out = np.empty((data.shape[0], spec.d_e), dtype=np.float32)
    graphs = {}
    for start in range(0, data.shape[0], batch_size):
        chunk = data[start : start + batch_size]
        b = chunk.shape[0]
        if b not in graphs:
            x = parameter("data/x", (b, 1, spec.extent, spec.extent))
            graphs[b] = (x, embedding_node(spec, weights, x))
        x, node = graphs[b]
        out[start : start + b] = evaluate(node, {"data/x": chunk})
    return out


# ---------------------------------------------------------------------------
# Adversarial training


def _gan_graphs(arch, schedule, encoder_embed):
    batch = schedule.batch_size
    data_shape = (batch,) + tuple(arch.data_shape)
    g_nodes = parameter_nodes(arch.g_shapes)
    d_nodes = parameter_nodes(arch.d_shapes)

    z = parameter("data/z", (batch, arch.d_z))
    fake_out, g_stats = arch.g_forward(g_nodes, z, "train")

    real = parameter("data/real", data_shape)
    fake = parameter("data/fake", data_shape)
    mixed = parameter("data/mixed", data_shape)
    real_scores, d_stats = arch.d_forward(d_nodes, real, "train")
    fake_scores, _ = arch.d_forward(d_nodes, fake, "train")
    mixed_scores, _ = arch.d_forward(d_nodes, mixed, "train")
    penalty = gradient_penalty_node(mixed_scores, mixed, schedule.gp_weight)
    d_loss = add(critic_loss(real_scores, fake_scores), penalty)

    adv_scores, _ = arch.d_forward(d_nodes, fake_out, "train")
    g_loss = generator_adversarial_loss(adv_scores)
    id_node = None
    if encoder_embed is not None and schedule.identity_weight > 0:
        id_node = identity_loss(encoder_embed(fake_out))
        g_loss = add(g_loss, mul_scalar(id_node, schedule.identity_weight))

    d_train = trainable_names(arch.d_shapes)
    g_train = trainable_names(arch.g_shapes)
    return {
        "fake_out": fake_out,
        "d_loss": d_loss,
        "penalty": penalty,
        "d_grads": derive(d_loss, [d_nodes[n] for n in d_train]),
        "d_train": d_train,
        "d_stats": _stat_outputs(d_stats),
        "g_loss": g_loss,
        "id_node": id_node,
        "g_grads": derive(g_loss, [g_nodes[n] for n in g_train]),
        "g_train": g_train,
        "g_stats": _stat_outputs(g_stats),
    }


def train_iwgan(
    corpus, arch, schedule, init=None, encoder_embed=None, log_path=None
):
    """Critic/generator alternation with gradient penalty.

    Per iteration: ``n_critic`` critic updates on fresh real/fake
    batches, then one generator update carrying the identity term when
    ``encoder_embed`` is given.  Returns (weights, log rows); rows are
    (step, d_loss, g_loss, gp, id_loss).
    """
    data = np.asarray(corpus, dtype=np.float32)
    if data.shape[0] == 0:
        raise EmptyCorpus("no training samples")
    if data.shape[1:] != tuple(arch.data_shape):
        raise ValueError(
            f"corpus samples {data.shape[1:]} != architecture {arch.data_shape}"
        )
    shapes = {**arch.g_shapes, **arch.d_shapes}
    weights = _merge_init(shapes, schedule.seed, init)
    graphs = _gan_graphs(arch, schedule, encoder_embed)
    d_train, g_train = graphs["d_train"], graphs["g_train"]
    d_stat_names, d_stat_nodes = graphs["d_stats"]
    g_stat_names, g_stat_nodes = graphs["g_stats"]

    adam_d = AdamState.fresh(
        {n: weights[n] for n in d_train}, schedule.lr, schedule.beta1, schedule.beta2
    )
    adam_g = AdamState.fresh(
        {n: weights[n] for n in g_train}, schedule.lr, schedule.beta1, schedule.beta2
    )
    rng = np.random.default_rng(schedule.seed)
    batch = schedule.batch_size
    rows = []
    for step in range(schedule.steps):
        d_loss_value = penalty_value = 0.0
        for _ in range(schedule.n_critic):
            idx = rng.integers(0, data.shape[0], size=batch)
            z = rng.standard_normal((batch, arch.d_z)).astype(np.float32)
            u = rng.uniform(0.0, 1.0, size=batch).astype(np.float32)
            bindings = dict(weights)
            bindings["data/z"] = z
            fake_values = evaluate(
                graphs["fake_out"], bindings, check_finite=False
            )
            real_values = data[idx]
            u = u.reshape((batch,) + (1,) * (real_values.ndim - 1))
            bindings["data/real"] = real_values
            bindings["data/fake"] = fake_values
            bindings["data/mixed"] = u * real_values + (1.0 - u) * fake_values
            outputs = [graphs["d_loss"], graphs["penalty"]]
            values = evaluate(
                outputs + graphs["d_grads"] + d_stat_nodes,
                bindings,
                check_finite=False,
            )
            d_loss_value = float(values[0])
            penalty_value = float(values[1])
            _check_finite(d_loss_value, step, "critic loss")
            adam_step(
                weights, dict(zip(d_train, values[2 : 2 + len(d_train)])), adam_d
            )
            _update_running(
                weights,
                d_stat_names,
                _split_stats(values[2 + len(d_train) :]),
                schedule.bn_momentum,
            )

        z = rng.standard_normal((batch, arch.d_z)).astype(np.float32)
        bindings = dict(weights)
        bindings["data/z"] = z
        outputs = [graphs["g_loss"]]
        if graphs["id_node"] is not None:
            outputs.append(graphs["id_node"])
        values = evaluate(
            outputs + graphs["g_grads"] + g_stat_nodes, bindings, check_finite=False
        )
        g_loss_value = float(values[0])
        _check_finite(g_loss_value, step, "generator loss")
        id_value = float(values[1]) if graphs["id_node"] is not None else 0.0
        offset = len(outputs)
        adam_step(
            weights, dict(zip(g_train, values[offset : offset + len(g_train)])), adam_g
        )
        _update_running(
            weights,
            g_stat_names,
            _split_stats(values[offset + len(g_train) :]),
            schedule.bn_momentum,
        )
        rows.append((step, d_loss_value, g_loss_value, penalty_value, id_value))
    if log_path is not None:
        _write_log(log_path, ["step", "d_loss", "g_loss", "gp", "id_loss"], rows)
    return weights, rows


def finetune_plain(weights, plain_corpus, arch, schedule, encoder_embed=None, log_path=None):
    """Continue adversarial training on a different impression corpus."""
    shapes = {**arch.g_shapes, **arch.d_shapes}
    missing = sorted(set(shapes) - set(weights))
    if missing:
        raise ArchitectureMismatch(f"weights lack tensors {missing}")
    return train_iwgan(
        plain_corpus,
        arch,
        schedule,
        init=weights,
        encoder_embed=encoder_embed,
        log_path=log_path,
    )
