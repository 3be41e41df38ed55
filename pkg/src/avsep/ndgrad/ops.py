"""Differentiable operations over :class:`~avsep.ndgrad.tensor.Tensor`.

Shapes are checked eagerly and mismatches raise
:class:`~avsep.errors.DimensionError`. Broadcasting is deliberately limited
to the single case the separator needs (a 1-element bias tensor against any
shape); everything else is exact-shape.
"""

from __future__ import annotations

import numpy as np

from avsep.errors import DimensionError, NumericError
from avsep.ndgrad import _kernels
from avsep.ndgrad.tensor import Tensor, record_op


def _same_shape(a: Tensor, b: Tensor, op: str):
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def _is_scalar(t: Tensor) -> bool:
    return t.data.size == 1


# -- arithmetic -------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; either operand may be a 1-element (bias) tensor."""
    if a.shape != b.shape and not (_is_scalar(a) or _is_scalar(b)):
        raise DimensionError(f"add: shape mismatch {a.shape} vs {b.shape}")
    out = a.data + b.data

    def backward(g):
        ga = g.sum().reshape(a.shape) if _is_scalar(a) and g.shape != a.shape else g
        gb = g.sum().reshape(b.shape) if _is_scalar(b) and g.shape != b.shape else g
        return ga, gb

    return record_op("add", (a, b), out, backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")
    return record_op("sub", (a, b), a.data - b.data, lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")
    return record_op(
        "mul", (a, b), a.data * b.data, lambda g: (g * b.data, g * a.data)
    )


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return record_op("scale", (a,), a.data * c, lambda g: (g * c,))


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size
    return record_op(
        "mean_all", (a,), np.asarray(a.data.mean()), lambda g: (np.full(a.shape, g / n),)
    )


# -- activations ------------------------------------------------------------


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    if not 0.0 <= slope < 1.0:
        raise NumericError(f"leaky_relu slope must be in [0, 1), got {slope}")
    out = np.maximum(x.data, slope * x.data)
    return record_op(
        "leaky_relu",
        (x,),
        out,
        lambda g: (np.where(x.data >= 0.0, g, slope * g),),
    )


def relu(x: Tensor) -> Tensor:
    return leaky_relu(x, 0.0)


def sigmoid(x: Tensor) -> Tensor:
    s = 1.0 / (1.0 + np.exp(-x.data))
    return record_op("sigmoid", (x,), s, lambda g: (g * s * (1.0 - s),))


# -- convolutions -----------------------------------------------------------


def conv2d(x: Tensor, k: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of x[N,C,H,W] with k[K,C,kh,kw] (no kernel flip)."""
    if x.data.ndim != 4 or k.data.ndim != 4:
        raise DimensionError("conv2d expects 4-d input and kernel")
    n, c, h, w = x.shape
    ko, ci, kh, kw = k.shape
    if ci != c:
        raise DimensionError(f"conv2d: input has {c} channels, kernel expects {ci}")
    if kh > h + 2 * padding or kw > w + 2 * padding:
        raise DimensionError("conv2d: kernel larger than padded input")
    if (h + 2 * padding - kh) % stride or (w + 2 * padding - kw) % stride:
        raise DimensionError("conv2d: spatial dims not divisible by stride")
    out, ctx = _kernels.corr2d_fwd(x.data, k.data, stride, padding)

    def backward(g):
        gx = _kernels.col2im_accum(g, k.data, stride, padding, h, w)
        gk = _kernels.kernel_grad_ctx(ctx, x.data, g, stride, padding, kh, kw)
        return gx, gk

    return record_op("conv2d", (x, k), out, backward)


def conv_transpose2d(x: Tensor, k: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Exact adjoint of conv2d with the same kernel layout k[K,C,kh,kw].

    Maps x[N,K,h,w] to [N,C,(h-1)*stride - 2*padding + kh, ...].
    """
    if x.data.ndim != 4 or k.data.ndim != 4:
        raise DimensionError("conv_transpose2d expects 4-d input and kernel")
    n, kin, h, w = x.shape
    ko, c, kh, kw = k.shape
    if kin != ko:
        raise DimensionError(
            f"conv_transpose2d: input has {kin} channels, kernel expects {ko}"
        )
    ho = (h - 1) * stride - 2 * padding + kh
    wo = (w - 1) * stride - 2 * padding + kw
    if ho <= 0 or wo <= 0:
        raise DimensionError("conv_transpose2d: non-positive output size")
    out = _kernels.col2im_accum(x.data, k.data, stride, padding, ho, wo)

    def backward(g):
        return _kernels.transpose_backward(g, k.data, x.data, stride, padding)

    return record_op("conv_transpose2d", (x, k), out, backward)


# -- structure --------------------------------------------------------------


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """Stack two [N,C,H,W] maps along the channel axis."""
    if a.data.ndim != 4 or b.data.ndim != 4:
        raise DimensionError("concat_channels expects 4-d tensors")
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise DimensionError(
            f"concat_channels: incompatible shapes {a.shape} vs {b.shape}"
        )
    ca = a.shape[1]
    out = np.concatenate([a.data, b.data], axis=1)
    return record_op(
        "concat_channels", (a, b), out, lambda g: (g[:, :ca], g[:, ca:])
    )


def concat_rows(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1:] != b.shape[1:]:
        raise DimensionError(f"concat_rows: incompatible shapes {a.shape} vs {b.shape}")
    na = a.shape[0]
    out = np.concatenate([a.data, b.data], axis=0)
    return record_op("concat_rows", (a, b), out, lambda g: (g[:na], g[na:]))


def slice_rows(x: Tensor, start: int, stop: int) -> Tensor:
    n = x.shape[0]
    if not (0 <= start < stop <= n):
        raise DimensionError(f"slice_rows: [{start}:{stop}] out of range for {n} rows")

    def backward(g):
        gx = np.zeros_like(x.data)
        gx[start:stop] = g
        return (gx,)

    return record_op("slice_rows", (x,), x.data[start:stop].copy(), backward)


def tile_spatial(v: Tensor, h: int, w: int) -> Tensor:
    """Expand v[N,C] to [N,C,h,w]; every location carries the same vector."""
    if v.data.ndim != 2:
        raise DimensionError("tile_spatial expects a [N,C] tensor")
    out = np.broadcast_to(v.data[:, :, None, None], v.shape + (h, w)).copy()
    return record_op("tile_spatial", (v,), out, lambda g: (g.sum(axis=(2, 3)),))


def sum_channels(x: Tensor) -> Tensor:
    """Reduce [N,C,H,W] to [N,1,H,W] by summing channels."""
    if x.data.ndim != 4:
        raise DimensionError("sum_channels expects a 4-d tensor")
    c = x.shape[1]
    out = x.data.sum(axis=1, keepdims=True)
    return record_op(
        "sum_channels", (x,), out, lambda g: (np.repeat(g, c, axis=1),)
    )


def global_avg_pool(x: Tensor) -> Tensor:
    """Average [N,C,H,W] spatially down to [N,C]."""
    if x.data.ndim != 4:
        raise DimensionError("global_avg_pool expects a 4-d tensor")
    n, c, h, w = x.shape
    out = x.data.mean(axis=(2, 3))

    def backward(g):
        return (np.broadcast_to(g[:, :, None, None] / (h * w), x.shape).copy(),)

    return record_op("global_avg_pool", (x,), out, backward)


# -- layers -----------------------------------------------------------------


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """x[N,Din] @ w[Din,Dout] (+ b[Dout])."""
    if x.data.ndim != 2 or w.data.ndim != 2:
        raise DimensionError("linear expects 2-d input and weight")
    if x.shape[1] != w.shape[0]:
        raise DimensionError(f"linear: {x.shape} @ {w.shape}")
    out = x.data @ w.data
    if b is not None:
        if b.shape != (w.shape[1],):
            raise DimensionError(f"linear: bias shape {b.shape} != ({w.shape[1]},)")
        out = out + b.data

    def backward(g):
        gx = g @ w.data.T
        gw = x.data.T @ g
        if b is None:
            return gx, gw
        return gx, gw, g.sum(axis=0)

    inputs = (x, w) if b is None else (x, w, b)
    return record_op("linear", inputs, out, backward)


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-batch normalization over (N,H,W) for each channel; no running stats."""
    if x.data.ndim != 4:
        raise DimensionError("batch_norm expects a 4-d tensor")
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise DimensionError(f"batch_norm: gamma/beta must have shape ({c},)")
    axes = (0, 2, 3)
    m = x.data.size // c
    mu = x.data.mean(axis=axes, keepdims=True)
    var = np.einsum("nchw,nchw->c", x.data, x.data)[None, :, None, None] / m - mu * mu
    inv = 1.0 / np.sqrt(np.maximum(var, 0.0) + eps)
    xhat = (x.data - mu) * inv
    out = gamma.data[None, :, None, None] * xhat + beta.data[None, :, None, None]

    def backward(g):
        gg = (g * xhat).sum(axis=axes)
        gb = g.sum(axis=axes)
        gs = g * gamma.data[None, :, None, None]
        gx = inv * (
            gs
            - gs.mean(axis=axes, keepdims=True)
            - xhat * (gs * xhat).sum(axis=axes, keepdims=True) / m
        )
        return gx, gg, gb

    return record_op("batch_norm", (x, gamma, beta), out, backward)


# -- losses and similarities ------------------------------------------------


def l1_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean absolute difference (scalar)."""
    _same_shape(pred, target, "l1_loss")
    d = pred.data - target.data
    n = d.size

    def backward(g):
        s = np.sign(d) * (g / n)
        return s, -s

    return record_op("l1_loss", (pred, target), np.asarray(np.abs(d).mean()), backward)


def cosine_rows(a: Tensor, b: Tensor) -> Tensor:
    """Row-wise cosine similarity of a[N,D] and b[N,D] -> [N]."""
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise DimensionError("cosine_rows expects 2-d tensors")
    _same_shape(a, b, "cosine_rows")
    na = np.linalg.norm(a.data, axis=1)
    nb = np.linalg.norm(b.data, axis=1)
    if np.any(na == 0.0) or np.any(nb == 0.0):
        raise NumericError("cosine_rows: zero-norm row")
    dot = (a.data * b.data).sum(axis=1)
    cos = dot / (na * nb)

    def backward(g):
        ga = (
            b.data / (na * nb)[:, None]
            - a.data * (cos / (na * na))[:, None]
        ) * g[:, None]
        gb = (
            a.data / (na * nb)[:, None]
            - b.data * (cos / (nb * nb))[:, None]
        ) * g[:, None]
        return ga, gb

    return record_op("cosine_rows", (a, b), cos, backward)


def cosine_similarity(a: Tensor, b: Tensor) -> Tensor:
    """Cosine similarity of two 1-d vectors (scalar in [-1, 1])."""
    if a.data.ndim != 1 or b.data.ndim != 1:
        raise DimensionError("cosine_similarity expects 1-d tensors")
    _same_shape(a, b, "cosine_similarity")
    na = float(np.linalg.norm(a.data))
    nb = float(np.linalg.norm(b.data))
    if na == 0.0 or nb == 0.0:
        raise NumericError("cosine_similarity: zero-norm input")
    cos = float(a.data @ b.data / (na * nb))

    def backward(g):
        ga = (b.data / (na * nb) - a.data * cos / (na * na)) * g
        gb = (a.data / (na * nb) - b.data * cos / (nb * nb)) * g
        return ga, gb

    return record_op("cosine_similarity", (a, b), np.asarray(cos), backward)
