"""Reverse-mode differentiation over explicit graphs.

Gradients are ordinary graph nodes, so a gradient expression can be
differentiated again.  That property is what makes gradient-penalty
training expressible here without a second engine.
"""

from .graph import (
    AutodiffError,
    EvalConfig,
    NonFiniteValue,
    NonScalarOutput,
    ShapeMismatch,
    TensorNode,
    UnboundParameter,
    UnknownKind,
    OP_KINDS,
    add,
    batchnorm,
    build_op,
    constant,
    conv2d,
    conv2d_kernel_grad,
    conv2d_transpose,
    derive,
    evaluate,
    leaky_relu,
    l2_norm,
    matmul,
    mul,
    mul_scalar,
    parameter,
    reciprocal,
    reduce_mean,
    reduce_sum,
    relu,
    reshape,
    same_pads,
    sqrt,
    square,
    step,
    sub,
    tanh,
    transpose,
)
from .optim import Adam, AdamState, adam_step
from .checkpoint import load_checkpoint, save_checkpoint, CheckpointError

__all__ = [
    "AutodiffError",
    "EvalConfig",
    "NonFiniteValue",
    "NonScalarOutput",
    "ShapeMismatch",
    "TensorNode",
    "UnboundParameter",
    "UnknownKind",
    "OP_KINDS",
    "add",
    "batchnorm",
    "build_op",
    "constant",
    "conv2d",
    "conv2d_kernel_grad",
    "conv2d_transpose",
    "derive",
    "evaluate",
    "leaky_relu",
    "l2_norm",
    "matmul",
    "mul",
    "mul_scalar",
    "parameter",
    "reciprocal",
    "reduce_mean",
    "reduce_sum",
    "relu",
    "reshape",
    "same_pads",
    "sqrt",
    "square",
    "step",
    "sub",
    "tanh",
    "transpose",
    "Adam",
    "AdamState",
    "adam_step",
    "save_checkpoint",
    "load_checkpoint",
    "CheckpointError",
]
