"""Network ladders: generator, critic, autoencoder halves, embedder.

All four image networks share one mirrored geometry described by a
LadderSpec: a fully-connected widening, a 4x4 base grid, and a stack of
kernel-4 stride-2 (de)convolutions.  A small MLP variant serves
low-dimensional point data, where the adversarial mechanics can be
exercised in seconds.

Forward builders take a dict of named TensorNodes and return graph
nodes; they never touch raw arrays.  Batch normalization in train mode
uses batch statistics and reports them so the caller can maintain
running averages; eval mode reads the stored statistics instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import (
    add,
    conv2d,
    conv2d_transpose,
    batchnorm,
    leaky_relu,
    matmul,
    mul,
    parameter,
    reciprocal,
    relu,
    reshape,
    l2_norm,
    tanh,
)


class ArchitectureMismatch(Exception):
    """Checkpoint tensors do not line up with the target network."""


@dataclass(frozen=True)
class LadderSpec:
    """Geometry of the mirrored conv ladders.

    ``channels`` lists transposed-conv output channels from the 4x4 base
    grid up to the single-channel image; the critic and encoder run the
    reverse ladder.  ``d_e`` sizes the embedder output.
    """

    d_z: int
    fc_width: int
    base_hw: int
    base_channels: int
    channels: tuple
    extent: int
    d_e: int

    def __post_init__(self):
        if self.fc_width != self.base_hw * self.base_hw * self.base_channels:
            raise ValueError(
                f"fc_width {self.fc_width} != {self.base_hw}^2 * {self.base_channels}"
            )
        if self.extent != self.base_hw * 2 ** len(self.channels):
            raise ValueError(
                f"extent {self.extent} unreachable from {self.base_hw} "
                f"with {len(self.channels)} doublings"
            )
        if self.channels[-1] != 1:
            raise ValueError("last ladder stage must emit one channel")

    @classmethod
    def full(cls):
        """512x512 seven-deconvolution ladder, 512-d latent."""
        return cls(
            d_z=512,
            fc_width=16384,
            base_hw=4,
            base_channels=1024,
            channels=(512, 256, 128, 64, 32, 16, 1),
            extent=512,
            d_e=192,
        )

    @classmethod
    def desk(cls):
        """64x64 four-deconvolution ladder for workstation-scale runs."""
        return cls(
            d_z=64,
            fc_width=4096,
            base_hw=4,
            base_channels=256,
            channels=(128, 64, 32, 1),
            extent=64,
            d_e=32,
        )

    @classmethod
    def compact(cls):
        """16x16 two-deconvolution ladder for high-volume generation."""
        return cls(
            d_z=16,
            fc_width=512,
            base_hw=4,
            base_channels=32,
            channels=(16, 1),
            extent=16,
            d_e=16,
        )


def critic_channels(spec):
    """Conv output channels of the reverse ladder (image toward base)."""
    return tuple(reversed((spec.base_channels,) + spec.channels[:-1]))


def describe_ladder(spec):
    """Layer table of the generator ladder, for manifests and reports."""
    rows = [
        {"operation": "input", "output_size": [spec.d_z]},
        {"operation": "fully_connected", "output_size": [spec.fc_width]},
        {
            "operation": "reshape",
            "output_size": [spec.base_hw, spec.base_hw, spec.base_channels],
        },
    ]
    hw = spec.base_hw
    for c in spec.channels:
        hw *= 2
        rows.append(
            {
                "operation": "deconvolution",
                "output_size": [hw, hw, c],
                "filter_size": [4, 4],
            }
        )
    return rows


# ---------------------------------------------------------------------------
# Parameter shape tables

_KERNEL_HW = 4


def _bn_shapes(prefix, c):
    shape = (1, c, 1, 1)
    return {
        f"{prefix}/gamma": shape,
        f"{prefix}/beta": shape,
        f"{prefix}/mean": shape,
        f"{prefix}/var": shape,
    }


def _conv_stack_shapes(prefix, spec, first_bn=False):
    """Reverse-ladder conv kernels and biases (+norms past the first)."""
    shapes = {}
    ladder = critic_channels(spec)
    c_in = 1
    for i, c_out in enumerate(ladder):
        shapes[f"{prefix}/conv{i}/k"] = (c_out, c_in, _KERNEL_HW, _KERNEL_HW)
        shapes[f"{prefix}/conv{i}/b"] = (c_out, 1, 1)
        if i > 0 or first_bn:
            shapes.update(_bn_shapes(f"{prefix}/bn{i}", c_out))
        c_in = c_out
    return shapes


def parameter_shapes(spec, part, n_classes=None):
    """Name -> shape table for one sub-network.

    Parts: ``gen`` (generator / decoder), ``dis`` (critic), ``enc``
    (autoencoder front half), ``emb`` (identity embedder; pass
    ``n_classes`` to include its training head).
    """
    if part == "gen":
        shapes = {
            "gen/fc/w": (spec.d_z, spec.fc_width),
            "gen/fc/b": (spec.fc_width,),
        }
        shapes.update(_bn_shapes("gen/bn_fc", spec.base_channels))
        c_in = spec.base_channels
        last = len(spec.channels) - 1
        for i, c_out in enumerate(spec.channels):
            shapes[f"gen/deconv{i}/k"] = (c_in, c_out, _KERNEL_HW, _KERNEL_HW)
            shapes[f"gen/deconv{i}/b"] = (c_out, 1, 1)
            if i < last:
                shapes.update(_bn_shapes(f"gen/bn{i}", c_out))
            c_in = c_out
        return shapes
    if part == "dis":
        shapes = _conv_stack_shapes("dis", spec)
        shapes["dis/fc/w"] = (spec.fc_width, 1)
        shapes["dis/fc/b"] = (1,)
        return shapes
    if part == "enc":
        shapes = _conv_stack_shapes("enc", spec)
        shapes["enc/fc/w"] = (spec.fc_width, spec.d_z)
        shapes["enc/fc/b"] = (spec.d_z,)
        return shapes
    if part == "emb":
        shapes = {}
        ladder = critic_channels(spec)
        c_in = 1
        for i, c_out in enumerate(ladder):
            shapes[f"emb/conv{i}/k"] = (c_out, c_in, _KERNEL_HW, _KERNEL_HW)
            shapes[f"emb/conv{i}/b"] = (c_out, 1, 1)
            c_in = c_out
        shapes["emb/fc/w"] = (spec.fc_width, spec.d_e)
        shapes["emb/fc/b"] = (spec.d_e,)
        if n_classes is not None:
            shapes["emb/head/w"] = (spec.d_e, int(n_classes))
            shapes["emb/head/b"] = (int(n_classes),)
        return shapes
    raise ValueError(f"unknown part {part!r}")


STAT_SUFFIXES = ("/mean", "/var")


def trainable_names(names):
    """Parameter names excluding batchnorm running statistics."""
    return [n for n in names if not n.endswith(STAT_SUFFIXES)]


def init_weights(shapes, seed=0):
    """Fresh float32 weights for a name -> shape table.

    Kernels and matrices are N(0, 0.02); norm scales N(1, 0.02); biases
    and shifts start at zero, running stats at the identity transform.
    Draw order follows sorted names, so layout changes elsewhere do not
    reshuffle the stream.
    """
    rng = np.random.default_rng(seed)
    weights = {}
    for name in sorted(shapes):
        shape = shapes[name]
        if name.endswith("/k") or name.endswith("/w"):
            weights[name] = rng.normal(0.0, 0.02, size=shape).astype(np.float32)
        elif name.endswith("/gamma"):
            weights[name] = rng.normal(1.0, 0.02, size=shape).astype(np.float32)
        elif name.endswith("/var"):
            weights[name] = np.ones(shape, dtype=np.float32)
        else:
            weights[name] = np.zeros(shape, dtype=np.float32)
    return weights


def parameter_nodes(shapes):
    return {name: parameter(name, shape) for name, shape in shapes.items()}


# ---------------------------------------------------------------------------
# Forward builders

_BN_AXES = (0, 2, 3)


def _norm_layer(params, name, x, mode, stats):
    gamma = params[f"{name}/gamma"]
    beta = params[f"{name}/beta"]
    if mode == "train":
        out, mean, var = batchnorm(x, gamma, beta, axes=_BN_AXES)
        stats[name] = (mean, var)
        return out
    out, _, _ = batchnorm(
        x, gamma, beta, axes=_BN_AXES, mean=params[f"{name}/mean"], var=params[f"{name}/var"]
    )
    return out


def generator_forward(spec, params, z, mode="train"):
    """Latent (n, d_z) to image (n, 1, extent, extent) in [-1, 1]."""
    stats = {}
    n = z.shape[0]
    h = add(matmul(z, params["gen/fc/w"]), params["gen/fc/b"])
    h = reshape(h, (n, spec.base_channels, spec.base_hw, spec.base_hw))
    h = relu(_norm_layer(params, "gen/bn_fc", h, mode, stats))
    last = len(spec.channels) - 1
    for i in range(len(spec.channels)):
        h = conv2d_transpose(h, params[f"gen/deconv{i}/k"], stride=2)
        h = add(h, params[f"gen/deconv{i}/b"])
        if i < last:
            h = relu(_norm_layer(params, f"gen/bn{i}", h, mode, stats))
        else:
            h = tanh(h)
    return h, stats


def _conv_stack(prefix, spec, params, x, mode, stats, first_bn=False):
    h = x
    for i in range(len(critic_channels(spec))):
        h = conv2d(h, params[f"{prefix}/conv{i}/k"], stride=2)
        h = add(h, params[f"{prefix}/conv{i}/b"])
        if i > 0 or first_bn:
            h = _norm_layer(params, f"{prefix}/bn{i}", h, mode, stats)
        h = leaky_relu(h, 0.2)
    n = x.shape[0]
    return reshape(h, (n, spec.fc_width))


def discriminator_forward(spec, params, x, mode="train"):
    """Image batch to per-sample critic scores, shape (n, 1)."""
    stats = {}
    h = _conv_stack("dis", spec, params, x, mode, stats)
    return add(matmul(h, params["dis/fc/w"]), params["dis/fc/b"]), stats


def encoder_forward(spec, params, x, mode="train"):
    """Image batch to latent codes, shape (n, d_z)."""
    stats = {}
    h = _conv_stack("enc", spec, params, x, mode, stats)
    return add(matmul(h, params["enc/fc/w"]), params["enc/fc/b"]), stats


def embedding_forward(spec, params, x):
    """Image batch to unit-norm embeddings, shape (n, d_e).

    No batch statistics anywhere, so one image always maps to one
    embedding regardless of what it is batched with.
    """
    h = x
    for i in range(len(critic_channels(spec))):
        h = conv2d(h, params[f"emb/conv{i}/k"], stride=2)
        h = leaky_relu(add(h, params[f"emb/conv{i}/b"]), 0.2)
    n = x.shape[0]
    h = reshape(h, (n, spec.fc_width))
    e = add(matmul(h, params["emb/fc/w"]), params["emb/fc/b"])
    return mul(e, reciprocal(l2_norm(e, axes=1, keepdims=True)))


def classifier_head(params, embeddings):
    """Linear head over embeddings, used only while training the embedder."""
    return add(matmul(embeddings, params["emb/head/w"]), params["emb/head/b"])


# ---------------------------------------------------------------------------
# MLP variant for point data


@dataclass(frozen=True)
class MlpSpec:
    """Fully-connected generator/critic pair over d_out-dimensional points."""

    d_z: int = 8
    widths: tuple = (64, 64)
    d_out: int = 2


def mlp_parameter_shapes(mspec, part):
    if part not in ("gen", "dis"):
        raise ValueError(f"unknown part {part!r}")
    shapes = {}
    c_in = mspec.d_z if part == "gen" else mspec.d_out
    for i, width in enumerate(mspec.widths):
        shapes[f"{part}/fc{i}/w"] = (c_in, width)
        shapes[f"{part}/fc{i}/b"] = (width,)
        c_in = width
    d_out = mspec.d_out if part == "gen" else 1
    shapes[f"{part}/out/w"] = (c_in, d_out)
    shapes[f"{part}/out/b"] = (d_out,)
    return shapes


def mlp_generator_forward(mspec, params, z, mode="train"):
    h = z
    for i in range(len(mspec.widths)):
        h = relu(add(matmul(h, params[f"gen/fc{i}/w"]), params[f"gen/fc{i}/b"]))
    return add(matmul(h, params["gen/out/w"]), params["gen/out/b"]), {}


def mlp_critic_forward(mspec, params, x, mode="train"):
    h = x
    for i in range(len(mspec.widths)):
        h = leaky_relu(
            add(matmul(h, params[f"dis/fc{i}/w"]), params[f"dis/fc{i}/b"]), 0.2
        )
    return add(matmul(h, params["dis/out/w"]), params["dis/out/b"]), {}


# ---------------------------------------------------------------------------
# Architecture bundle consumed by the training loop


@dataclass(frozen=True)
class GanArchitecture:
    """Shape tables plus forward builders for one generator/critic pair."""

    name: str
    d_z: int
    data_shape: tuple
    g_shapes: dict
    d_shapes: dict
    g_forward: object
    d_forward: object


def conv_architecture(spec):
    return GanArchitecture(
        name=f"conv{spec.extent}",
        d_z=spec.d_z,
        data_shape=(1, spec.extent, spec.extent),
        g_shapes=parameter_shapes(spec, "gen"),
        d_shapes=parameter_shapes(spec, "dis"),
        g_forward=lambda params, z, mode="train": generator_forward(
            spec, params, z, mode
        ),
        d_forward=lambda params, x, mode="train": discriminator_forward(
            spec, params, x, mode
        ),
    )


def mlp_architecture(mspec):
    return GanArchitecture(
        name="mlp",
        d_z=mspec.d_z,
        data_shape=(mspec.d_out,),
        g_shapes=mlp_parameter_shapes(mspec, "gen"),
        d_shapes=mlp_parameter_shapes(mspec, "dis"),
        g_forward=lambda params, z, mode="train": mlp_generator_forward(
            mspec, params, z, mode
        ),
        d_forward=lambda params, x, mode="train": mlp_critic_forward(
            mspec, params, x, mode
        ),
    )
