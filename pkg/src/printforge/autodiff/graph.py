"""Graph construction, evaluation, and reverse-mode differentiation.

Nodes are immutable descriptions of a computation; nothing runs until
:func:`evaluate`.  :func:`derive` walks a graph backwards and emits new
nodes, so the output can be fed straight back into :func:`derive` for
second-order terms.  The primitive set is deliberately closed under
differentiation: every rule below builds only primitives from
``OP_KINDS``.

Convolution layout convention, shared by all three conv primitives: a
kernel array has shape (Cs, Cb, kh, kw) where Cs is the channel count
on the small-spatial side (conv output, deconv input) and Cb the count
on the big-spatial side.  With that single layout,

    <conv2d(x, k), y> == <x, conv2d_transpose(y, k)>

holds exactly with the same kernel on both sides, which is what makes
the conv gradient rules two-line affairs.
"""

from __future__ import annotations

import itertools
from typing import Iterable, Mapping, Sequence

import numpy as np
from numpy.lib.stride_tricks import as_strided


class AutodiffError(Exception):
    """Base class for graph construction and evaluation failures."""


class ShapeMismatch(AutodiffError):
    pass


class UnknownKind(AutodiffError):
    pass


class UnboundParameter(AutodiffError):
    pass


class NonFiniteValue(AutodiffError):
    pass


class NonScalarOutput(AutodiffError):
    pass


# Primitive kinds: every differentiation rule in this module emits only
# these.  batchnorm and l2_norm are accepted by build_op but expand into
# primitive subgraphs (see _SUGAR_BUILDERS).
OP_KINDS = frozenset(
    {
        "constant",
        "parameter",
        "add",
        "sub",
        "mul",
        "mul_scalar",
        "matmul",
        "transpose",
        "conv2d",
        "conv2d_transpose",
        "conv2d_kernel_grad",
        "relu",
        "leaky_relu",
        "tanh",
        "step",
        "reshape",
        "reduce_sum",
        "reduce_mean",
        "sqrt",
        "reciprocal",
        "square",
    }
)

SUGAR_KINDS = frozenset({"l2_norm", "batchnorm"})

_counter = itertools.count()


class TensorNode:
    """One vertex of a computation graph.

    ``value`` is set only for constants; every other node computes its
    value during :func:`evaluate`.  Nodes compare by identity.
    """

    __slots__ = ("kind", "inputs", "shape", "attrs", "name", "value", "uid")

    def __init__(self, kind, inputs, shape, attrs=None, name=None, value=None):
        self.kind = kind
        self.inputs = tuple(inputs)
        self.shape = tuple(int(e) for e in shape)
        self.attrs = dict(attrs) if attrs else {}
        self.uid = next(_counter)
        self.name = name if name is not None else f"{kind}_{self.uid}"
        self.value = value

    @property
    def size(self):
        return int(np.prod(self.shape)) if self.shape else 1

    def __repr__(self):
        dims = "x".join(str(e) for e in self.shape) or "scalar"
        return f"<{self.kind} {self.name} [{dims}]>"

    # Arithmetic sugar.  Scalar operands become broadcast constants
    # (or mul_scalar where that is the natural primitive).
    def __add__(self, other):
        return add(self, _as_node(other))

    def __radd__(self, other):
        return add(_as_node(other), self)

    def __sub__(self, other):
        return sub(self, _as_node(other))

    def __rsub__(self, other):
        return sub(_as_node(other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return mul_scalar(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return mul_scalar(self, 1.0 / float(other))
        return mul(self, reciprocal(other))

    def __neg__(self):
        return mul_scalar(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_node(x):
    if isinstance(x, TensorNode):
        return x
    return constant(np.asarray(x, dtype=np.float64))


def constant(array, name=None):
    arr = np.asarray(array)
    return TensorNode("constant", (), arr.shape, name=name, value=arr)


def parameter(name, shape):
    """A named leaf whose value arrives through evaluate() bindings."""
    return TensorNode("parameter", (), tuple(shape), name=name)


def _broadcast_shape(a, b, kind):
    try:
        return np.broadcast_shapes(a, b)
    except ValueError:
        raise ShapeMismatch(f"{kind}: shapes {a} and {b} do not broadcast")


def same_pads(extent, kernel, stride):
    """Top/bottom (or left/right) zero-pad widths for 'same' geometry.

    Chosen so a stride-s conv maps extent -> ceil(extent / s), which for
    even extents with kernel 4 stride 2 is an exact halving.
    """
    out = -(-extent // stride)
    total = max((out - 1) * stride + kernel - extent, 0)
    return (total // 2, total - total // 2)


def _conv_out(extent, kernel, pads, stride, kind):
    span = extent + pads[0] + pads[1] - kernel
    if span < 0 or span % stride != 0:
        raise ShapeMismatch(
            f"{kind}: extent {extent} with kernel {kernel}, pads {pads}, "
            f"stride {stride} has no exact output size"
        )
    return span // stride + 1


def _norm_pads(pads):
    (pt, pb), (pl, pr) = pads
    return ((int(pt), int(pb)), (int(pl), int(pr)))


# ---------------------------------------------------------------------------
# Constructors


def add(a, b):
    return TensorNode("add", (a, b), _broadcast_shape(a.shape, b.shape, "add"))


def sub(a, b):
    return TensorNode("sub", (a, b), _broadcast_shape(a.shape, b.shape, "sub"))


def mul(a, b):
    return TensorNode("mul", (a, b), _broadcast_shape(a.shape, b.shape, "mul"))


def mul_scalar(a, c):
    return TensorNode("mul_scalar", (a,), a.shape, {"c": float(c)})


def matmul(a, b):
    if len(a.shape) != 2 or len(b.shape) != 2:
        raise ShapeMismatch(f"matmul: expects 2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul: inner dims differ, {a.shape} @ {b.shape}")
    return TensorNode("matmul", (a, b), (a.shape[0], b.shape[1]))


def transpose(a):
    if len(a.shape) != 2:
        raise ShapeMismatch(f"transpose: expects a 2-D operand, got {a.shape}")
    return TensorNode("transpose", (a,), (a.shape[1], a.shape[0]))


def relu(a):
    return TensorNode("relu", (a,), a.shape)


def leaky_relu(a, alpha=0.2):
    return TensorNode("leaky_relu", (a,), a.shape, {"alpha": float(alpha)})


def tanh(a):
    return TensorNode("tanh", (a,), a.shape)


def step(a):
    """Heaviside indicator of positivity; derivative is zero everywhere."""
    return TensorNode("step", (a,), a.shape)


def sqrt(a):
    return TensorNode("sqrt", (a,), a.shape)


def reciprocal(a):
    return TensorNode("reciprocal", (a,), a.shape)


def square(a):
    return TensorNode("square", (a,), a.shape)


def reshape(a, new_shape):
    new_shape = tuple(int(e) for e in new_shape)
    if int(np.prod(new_shape)) != a.size:
        raise ShapeMismatch(f"reshape: cannot view {a.shape} as {new_shape}")
    return TensorNode("reshape", (a,), new_shape, {"shape": new_shape})


def _norm_axes(axes, rank, kind):
    if axes is None:
        return tuple(range(rank))
    if isinstance(axes, int):
        axes = (axes,)
    out = tuple(sorted(ax % rank for ax in axes))
    if len(set(out)) != len(out) or not out:
        raise ShapeMismatch(f"{kind}: bad axes {axes} for rank {rank}")
    return out


def _reduced_shape(shape, axes, keepdims):
    if keepdims:
        return tuple(1 if i in axes else e for i, e in enumerate(shape))
    return tuple(e for i, e in enumerate(shape) if i not in axes)


def reduce_sum(a, axes=None, keepdims=False):
    axes = _norm_axes(axes, len(a.shape), "reduce_sum")
    return TensorNode(
        "reduce_sum",
        (a,),
        _reduced_shape(a.shape, axes, keepdims),
        {"axes": axes, "keepdims": bool(keepdims)},
    )


def reduce_mean(a, axes=None, keepdims=False):
    axes = _norm_axes(axes, len(a.shape), "reduce_mean")
    return TensorNode(
        "reduce_mean",
        (a,),
        _reduced_shape(a.shape, axes, keepdims),
        {"axes": axes, "keepdims": bool(keepdims)},
    )


def conv2d(x, k, stride=2, pads=None):
    """Stride-s valid conv over zero-padded input; extents shrink by s.

    x: (N, Cb, H, W); k: (Cs, Cb, kh, kw) -> (N, Cs, Ho, Wo).
    """
    if len(x.shape) != 4 or len(k.shape) != 4:
        raise ShapeMismatch(f"conv2d: expects 4-D x and k, got {x.shape}, {k.shape}")
    n, cb, h, w = x.shape
    cs, cbk, kh, kw = k.shape
    if cbk != cb:
        raise ShapeMismatch(f"conv2d: x has {cb} channels, kernel expects {cbk}")
    if pads is None:
        pads = (same_pads(h, kh, stride), same_pads(w, kw, stride))
    pads = _norm_pads(pads)
    ho = _conv_out(h, kh, pads[0], stride, "conv2d")
    wo = _conv_out(w, kw, pads[1], stride, "conv2d")
    return TensorNode(
        "conv2d", (x, k), (n, cs, ho, wo), {"stride": int(stride), "pads": pads}
    )


def conv2d_transpose(y, k, stride=2, pads=None, out_hw=None):
    """Exact adjoint of conv2d with the same kernel; extents grow by s.

    y: (N, Cs, h, w); k: (Cs, Cb, kh, kw) -> (N, Cb, H, W) where by
    default H = h * stride (the 'same' geometry used by the ladders).
    """
    if len(y.shape) != 4 or len(k.shape) != 4:
        raise ShapeMismatch(
            f"conv2d_transpose: expects 4-D y and k, got {y.shape}, {k.shape}"
        )
    n, cs, h, w = y.shape
    csk, cb, kh, kw = k.shape
    if csk != cs:
        raise ShapeMismatch(f"conv2d_transpose: y has {cs} channels, kernel expects {csk}")
    if out_hw is None:
        out_hw = (h * stride, w * stride)
    out_hw = (int(out_hw[0]), int(out_hw[1]))
    if pads is None:
        pads = (same_pads(out_hw[0], kh, stride), same_pads(out_hw[1], kw, stride))
    pads = _norm_pads(pads)
    if _conv_out(out_hw[0], kh, pads[0], stride, "conv2d_transpose") != h:
        raise ShapeMismatch(
            f"conv2d_transpose: output height {out_hw[0]} inconsistent with input {h}"
        )
    if _conv_out(out_hw[1], kw, pads[1], stride, "conv2d_transpose") != w:
        raise ShapeMismatch(
            f"conv2d_transpose: output width {out_hw[1]} inconsistent with input {w}"
        )
    return TensorNode(
        "conv2d_transpose",
        (y, k),
        (n, cb) + out_hw,
        {"stride": int(stride), "pads": pads, "out_hw": out_hw},
    )


def conv2d_kernel_grad(x, g, kernel_hw, stride=2, pads=None):
    """Correlation of input x with output-sized g; yields a kernel-shaped
    tensor.  Third leg of the conv family, closing it under derive.

    x: (N, Cb, H, W); g: (N, Cs, Ho, Wo) -> (Cs, Cb, kh, kw).
    """
    if len(x.shape) != 4 or len(g.shape) != 4:
        raise ShapeMismatch(
            f"conv2d_kernel_grad: expects 4-D x and g, got {x.shape}, {g.shape}"
        )
    n, cb, h, w = x.shape
    ng, cs, ho, wo = g.shape
    if ng != n:
        raise ShapeMismatch(f"conv2d_kernel_grad: batch {n} vs {ng}")
    kh, kw = (int(kernel_hw[0]), int(kernel_hw[1]))
    if pads is None:
        pads = (same_pads(h, kh, stride), same_pads(w, kw, stride))
    pads = _norm_pads(pads)
    if _conv_out(h, kh, pads[0], stride, "conv2d_kernel_grad") != ho:
        raise ShapeMismatch(f"conv2d_kernel_grad: height geometry {h} vs {ho}")
    if _conv_out(w, kw, pads[1], stride, "conv2d_kernel_grad") != wo:
        raise ShapeMismatch(f"conv2d_kernel_grad: width geometry {w} vs {wo}")
    return TensorNode(
        "conv2d_kernel_grad",
        (x, g),
        (cs, cb, kh, kw),
        {"stride": int(stride), "pads": pads, "kernel_hw": (kh, kw)},
    )


def l2_norm(x, axes=None, keepdims=False, eps=1e-12):
    """sqrt(sum(x^2) + eps), as a primitive composite.

    The eps keeps the derivative finite at the origin, which matters
    when the norm sits inside a penalty that is itself differentiated.
    """
    s = reduce_sum(square(x), axes=axes, keepdims=keepdims)
    return sqrt(add(s, constant(np.asarray(eps))))


def batchnorm(x, gamma, beta, axes, eps=1e-5, mean=None, var=None):
    """Normalize over ``axes``, then scale and shift.

    With mean/var omitted the batch statistics are used and returned, so
    a training loop can fold them into running averages.  Passing stored
    statistics (as constants) gives inference behaviour.  gamma and beta
    must already be shaped to broadcast against x, e.g. (1, C, 1, 1).

    Returns (out, mean_node, var_node).
    """
    if mean is None:
        mean = reduce_mean(x, axes=axes, keepdims=True)
    centered = sub(x, mean)
    if var is None:
        var = reduce_mean(square(centered), axes=axes, keepdims=True)
    inv = reciprocal(sqrt(add(var, constant(np.asarray(eps)))))
    out = add(mul(mul(centered, inv), gamma), beta)
    return out, mean, var


_SUGAR_BUILDERS = {
    "l2_norm": lambda inputs, attrs: l2_norm(inputs[0], **attrs),
    "batchnorm": lambda inputs, attrs: batchnorm(*inputs, **attrs)[0],
}

_BUILDERS = {
    "add": lambda inputs, attrs: add(*inputs),
    "sub": lambda inputs, attrs: sub(*inputs),
    "mul": lambda inputs, attrs: mul(*inputs),
    "mul_scalar": lambda inputs, attrs: mul_scalar(inputs[0], **attrs),
    "matmul": lambda inputs, attrs: matmul(*inputs),
    "transpose": lambda inputs, attrs: transpose(inputs[0]),
    "conv2d": lambda inputs, attrs: conv2d(*inputs, **attrs),
    "conv2d_transpose": lambda inputs, attrs: conv2d_transpose(*inputs, **attrs),
    "conv2d_kernel_grad": lambda inputs, attrs: conv2d_kernel_grad(*inputs, **attrs),
    "relu": lambda inputs, attrs: relu(inputs[0]),
    "leaky_relu": lambda inputs, attrs: leaky_relu(inputs[0], **attrs),
    "tanh": lambda inputs, attrs: tanh(inputs[0]),
    "step": lambda inputs, attrs: step(inputs[0]),
    "sqrt": lambda inputs, attrs: sqrt(inputs[0]),
    "reciprocal": lambda inputs, attrs: reciprocal(inputs[0]),
    "square": lambda inputs, attrs: square(inputs[0]),
    "reshape": lambda inputs, attrs: reshape(inputs[0], **attrs),
    "reduce_sum": lambda inputs, attrs: reduce_sum(inputs[0], **attrs),
    "reduce_mean": lambda inputs, attrs: reduce_mean(inputs[0], **attrs),
}


def build_op(kind, inputs, **attrs):
    """Uniform constructor: dispatches on kind, validating shapes.

    The composite kinds l2_norm and batchnorm are accepted here and
    expand into primitive subgraphs; the returned node is the composite's
    output.
    """
    if kind in _BUILDERS:
        return _BUILDERS[kind](list(inputs), attrs)
    if kind in _SUGAR_BUILDERS:
        return _SUGAR_BUILDERS[kind](list(inputs), attrs)
    raise UnknownKind(f"no op kind {kind!r}")


# ---------------------------------------------------------------------------
# Evaluation


class EvalConfig:
    """Numeric policy for a single evaluate() call.

    storage is the dtype every node value is held in; accum is the dtype
    reductions (reduce_sum, reduce_mean) accumulate in before casting
    back.  Mean-reductions over whole images lose digits in pure 32-bit,
    hence the split default.
    """

    __slots__ = ("storage", "accum", "check_finite")

    def __init__(self, storage=np.float32, accum=np.float64, check_finite=True):
        self.storage = np.dtype(storage)
        self.accum = np.dtype(accum)
        self.check_finite = bool(check_finite)


_PRECISIONS = {
    "float32": (np.float32, np.float64),
    "float64": (np.float64, np.float64),
}


def _resolve_config(precision, check_finite):
    if isinstance(precision, EvalConfig):
        return precision
    try:
        storage, accum = _PRECISIONS[precision]
    except KeyError:
        raise UnknownKind(f"no precision mode {precision!r}")
    return EvalConfig(storage, accum, check_finite)


def _toposort(roots):
    """Post-order over the fan-in of ``roots``; iterative, cycle-checked."""
    order = []
    state = {}  # uid -> 1 while open, 2 when done
    stack = [(r, False) for r in roots]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            state[node.uid] = 2
            order.append(node)
            continue
        mark = state.get(node.uid)
        if mark == 2:
            continue
        if mark == 1:
            raise AutodiffError(f"cycle through {node!r}")
        state[node.uid] = 1
        stack.append((node, True))
        for inp in node.inputs:
            if state.get(inp.uid) != 2:
                stack.append((inp, False))
    return order


def _strided_patches(xp, kh, kw, stride):
    n, c, hp, wp = xp.shape
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    s0, s1, s2, s3 = xp.strides
    return as_strided(
        xp,
        shape=(n, c, ho, wo, kh, kw),
        strides=(s0, s1, s2 * stride, s3 * stride, s2, s3),
        writeable=False,
    )


def _eval_conv2d(x, k, stride, pads):
    xp = np.pad(x, ((0, 0), (0, 0), pads[0], pads[1]))
    patches = _strided_patches(xp, k.shape[2], k.shape[3], stride)
    y = np.tensordot(patches, k, axes=([1, 4, 5], [1, 2, 3]))
    return np.ascontiguousarray(np.moveaxis(y, 3, 1))


def _eval_conv2d_transpose(y, k, stride, pads, out_hw):
    n, cs, h, w = y.shape
    _, cb, kh, kw = k.shape
    hp = out_hw[0] + pads[0][0] + pads[0][1]
    wp = out_hw[1] + pads[1][0] + pads[1][1]
    # cols[n, cb, u, v, i, j] = sum_cs y[n, cs, i, j] * k[cs, cb, u, v]
    cols = np.einsum("ncij,cbuv->nbuvij", y, k, optimize=True)
    out = np.zeros((n, cb, hp, wp), dtype=y.dtype)
    for u in range(kh):
        for v in range(kw):
            out[
                :,
                :,
                u : u + (h - 1) * stride + 1 : stride,
                v : v + (w - 1) * stride + 1 : stride,
            ] += cols[:, :, u, v]
    return np.ascontiguousarray(
        out[:, :, pads[0][0] : hp - pads[0][1], pads[1][0] : wp - pads[1][1]]
    )


def _eval_kernel_grad(x, g, stride, pads, kernel_hw):
    xp = np.pad(x, ((0, 0), (0, 0), pads[0], pads[1]))
    patches = _strided_patches(xp, kernel_hw[0], kernel_hw[1], stride)
    return np.tensordot(g, patches, axes=([0, 2, 3], [0, 2, 3]))


def _forward(node, vals, cfg):
    kind = node.kind
    a = node.attrs
    if kind == "add":
        return vals[0] + vals[1]
    if kind == "sub":
        return vals[0] - vals[1]
    if kind == "mul":
        return vals[0] * vals[1]
    if kind == "mul_scalar":
        return vals[0] * cfg.storage.type(a["c"])
    if kind == "matmul":
        return vals[0] @ vals[1]
    if kind == "transpose":
        return np.ascontiguousarray(vals[0].T)
    if kind == "relu":
        return np.maximum(vals[0], 0)
    if kind == "leaky_relu":
        x = vals[0]
        return np.where(x > 0, x, cfg.storage.type(a["alpha"]) * x)
    if kind == "tanh":
        return np.tanh(vals[0])
    if kind == "step":
        return (vals[0] > 0).astype(cfg.storage)
    if kind == "sqrt":
        return np.sqrt(vals[0])
    if kind == "reciprocal":
        return 1.0 / vals[0]
    if kind == "square":
        return np.square(vals[0])
    if kind == "reshape":
        return vals[0].reshape(a["shape"])
    if kind == "reduce_sum":
        out = vals[0].sum(axis=a["axes"], keepdims=a["keepdims"], dtype=cfg.accum)
        return np.asarray(out, dtype=cfg.storage)
    if kind == "reduce_mean":
        out = vals[0].mean(axis=a["axes"], keepdims=a["keepdims"], dtype=cfg.accum)
        return np.asarray(out, dtype=cfg.storage)
    if kind == "conv2d":
        return _eval_conv2d(vals[0], vals[1], a["stride"], a["pads"])
    if kind == "conv2d_transpose":
        return _eval_conv2d_transpose(
            vals[0], vals[1], a["stride"], a["pads"], a["out_hw"]
        )
    if kind == "conv2d_kernel_grad":
        return _eval_kernel_grad(vals[0], vals[1], a["stride"], a["pads"], a["kernel_hw"])
    raise UnknownKind(f"no forward rule for {kind!r}")


def evaluate(outputs, bindings=None, precision="float32", check_finite=True):
    """Run the graph under ``outputs`` and return their values.

    ``outputs`` may be one node or a sequence; the return mirrors it.
    ``bindings`` maps parameter names to arrays.  Values are computed in
    dependency order with one shared cache, so overlapping subgraphs are
    evaluated once.  Unknown binding names are ignored, which lets one
    parameter dictionary serve several graphs.
    """
    single = isinstance(outputs, TensorNode)
    roots = [outputs] if single else list(outputs)
    cfg = _resolve_config(precision, check_finite)
    bindings = bindings or {}
    cache = {}
    for node in _toposort(roots):
        if node.kind == "constant":
            val = np.asarray(node.value, dtype=cfg.storage)
        elif node.kind == "parameter":
            try:
                bound = bindings[node.name]
            except KeyError:
                raise UnboundParameter(f"parameter {node.name!r} has no binding")
            val = np.asarray(bound, dtype=cfg.storage)
            if val.shape != node.shape:
                raise ShapeMismatch(
                    f"binding for {node.name!r} has shape {val.shape}, "
                    f"node expects {node.shape}"
                )
        else:
            val = _forward(node, [cache[i.uid] for i in node.inputs], cfg)
        if val.shape != node.shape:
            raise ShapeMismatch(
                f"{node!r} computed shape {val.shape}, expected {node.shape}"
            )
        if cfg.check_finite and not np.all(np.isfinite(val)):
            raise NonFiniteValue(f"non-finite value at {node!r}")
        cache[node.uid] = val
    results = [cache[r.uid] for r in roots]
    return results[0] if single else results


# ---------------------------------------------------------------------------
# Differentiation


def _zeros_like(node):
    return constant(np.zeros(node.shape), name=f"zero_like_{node.name}")


def _unbroadcast(g, target_shape):
    """Sum g down to target_shape, inverting numpy broadcasting."""
    if g.shape == tuple(target_shape):
        return g
    extra = len(g.shape) - len(target_shape)
    if extra > 0:
        g = reduce_sum(g, axes=tuple(range(extra)))
    axes = tuple(
        i for i, e in enumerate(target_shape) if e == 1 and g.shape[i] != 1
    )
    if axes:
        g = reduce_sum(g, axes=axes, keepdims=True)
    if g.shape != tuple(target_shape):
        g = reshape(g, target_shape)
    return g


def _ones_const(shape):
    return constant(np.ones(shape))


def _vjp(node, g):
    """Gradient contributions of ``node`` to its inputs, given upstream g.

    Returns a list aligned with node.inputs; None marks a zero
    contribution.  Every emitted node is a primitive, keeping the rule
    set closed under repeated differentiation.
    """
    kind = node.kind
    a = node.attrs
    x = node.inputs[0] if node.inputs else None
    if kind in ("constant", "parameter"):
        return []
    if kind == "add":
        return [_unbroadcast(g, node.inputs[0].shape), _unbroadcast(g, node.inputs[1].shape)]
    if kind == "sub":
        return [
            _unbroadcast(g, node.inputs[0].shape),
            _unbroadcast(mul_scalar(g, -1.0), node.inputs[1].shape),
        ]
    if kind == "mul":
        b = node.inputs[1]
        return [
            _unbroadcast(mul(g, b), x.shape),
            _unbroadcast(mul(g, x), b.shape),
        ]
    if kind == "mul_scalar":
        return [mul_scalar(g, a["c"])]
    if kind == "matmul":
        b = node.inputs[1]
        return [matmul(g, transpose(b)), matmul(transpose(x), g)]
    if kind == "transpose":
        return [transpose(g)]
    if kind == "relu":
        return [mul(g, step(x))]
    if kind == "leaky_relu":
        alpha = a["alpha"]
        slope = add(mul_scalar(step(x), 1.0 - alpha), constant(np.asarray(alpha)))
        return [mul(g, slope)]
    if kind == "tanh":
        return [mul(g, sub(constant(np.asarray(1.0)), square(node)))]
    if kind == "step":
        return [None]
    if kind == "sqrt":
        return [mul(g, mul_scalar(reciprocal(node), 0.5))]
    if kind == "reciprocal":
        return [mul_scalar(mul(g, square(node)), -1.0)]
    if kind == "square":
        return [mul(g, mul_scalar(x, 2.0))]
    if kind == "reshape":
        return [reshape(g, x.shape)]
    if kind in ("reduce_sum", "reduce_mean"):
        axes, keepdims = a["axes"], a["keepdims"]
        if not keepdims:
            kept = tuple(1 if i in axes else e for i, e in enumerate(x.shape))
            g = reshape(g, kept)
        spread = mul(g, _ones_const(x.shape))
        if kind == "reduce_mean":
            n = int(np.prod([x.shape[i] for i in axes]))
            spread = mul_scalar(spread, 1.0 / n)
        return [spread]
    if kind == "conv2d":
        k = node.inputs[1]
        stride, pads = a["stride"], a["pads"]
        gx = conv2d_transpose(g, k, stride, pads, out_hw=x.shape[2:])
        gk = conv2d_kernel_grad(x, g, k.shape[2:], stride, pads)
        return [gx, gk]
    if kind == "conv2d_transpose":
        y, k = node.inputs
        stride, pads = a["stride"], a["pads"]
        gy = conv2d(g, k, stride, pads)
        gk = conv2d_kernel_grad(g, y, k.shape[2:], stride, pads)
        return [gy, gk]
    if kind == "conv2d_kernel_grad":
        xin, gin = node.inputs
        stride, pads = a["stride"], a["pads"]
        gx = conv2d_transpose(gin, g, stride, pads, out_hw=xin.shape[2:])
        gg = conv2d(xin, g, stride, pads)
        return [gx, gg]
    raise UnknownKind(f"no gradient rule for {kind!r}")


def derive(output, wrt):
    """Reverse-mode gradients of a scalar output as new graph nodes.

    ``wrt`` may be a single node or a sequence; the return mirrors it.
    Nodes unreachable from ``output`` get explicit zero constants.  The
    result is an ordinary graph: evaluate it, or derive it again.
    """
    single = isinstance(wrt, TensorNode)
    targets = [wrt] if single else list(wrt)
    if output.size != 1:
        raise NonScalarOutput(f"derive needs a scalar output, got shape {output.shape}")
    order = _toposort([output])
    adjoint = {output.uid: _ones_const(output.shape)}
    for node in reversed(order):
        g = adjoint.get(node.uid)
        if g is None or not node.inputs:
            continue
        for inp, contrib in zip(node.inputs, _vjp(node, g)):
            if contrib is None:
                continue
            prev = adjoint.get(inp.uid)
            adjoint[inp.uid] = contrib if prev is None else add(prev, contrib)
    grads = [adjoint.get(t.uid) or _zeros_like(t) for t in targets]
    return grads[0] if single else grads
