"""Dense 2-D convolution kernels: numba-jitted loops with a pure-numpy fallback.

The backend is chosen once at import time from the ``AVSEP_KERNELS``
environment variable: ``numba`` (default when importable), ``numpy``, or
``auto``. Both backends compute identical quantities in float64; the numpy
path realizes convolution as im2col + BLAS matmul, the numba path as direct
loops parallelized so each output element is written by exactly one thread
(results stay deterministic).

Three primitives cover forward and backward of both conv ops:

  corr2d        -- strided cross-correlation (conv2d forward, and the
                   input-gradient of conv_transpose2d)
  col2im_accum  -- scatter-add of kernel-weighted rows onto a padded grid
                   (conv_transpose2d forward, and the input-gradient of
                   conv2d)
  kernel_grad   -- correlation of input patches with output gradients
                   (weight gradient of both ops)
"""

from __future__ import annotations

import os

import numpy as np

_CHOICE = os.environ.get("AVSEP_KERNELS", "auto").strip().lower()
if _CHOICE not in ("auto", "numba", "numpy"):
    raise ValueError(
        f"AVSEP_KERNELS must be 'auto', 'numba' or 'numpy', got {_CHOICE!r}"
    )

HAS_NUMBA = False
if _CHOICE in ("auto", "numba"):
    try:
        from numba import njit, prange

        HAS_NUMBA = True
    except ImportError:
        if _CHOICE == "numba":
            raise
        HAS_NUMBA = False

BACKEND = "numba" if HAS_NUMBA else "numpy"


def _pad_hw(x, pad):
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def _patch_view(xp, kh, kw, stride, ho, wo):
    """Zero-copy view of all (kh, kw) patches: [N, ho, wo, C, kh, kw]."""
    n, c, hp, wp = xp.shape
    sn, sc, sh, sw = xp.strides
    shape = (n, ho, wo, c, kh, kw)
    strides = (sn, sh * stride, sw * stride, sc, sh, sw)
    return np.lib.stride_tricks.as_strided(xp, shape=shape, strides=strides)


def _out_hw(h, w, kh, kw, stride, pad):
    return (h + 2 * pad - kh) // stride + 1, (w + 2 * pad - kw) // stride + 1


# ---------------------------------------------------------------------------
# numpy backend (im2col / per-tap accumulation)
# ---------------------------------------------------------------------------


def _cols_numpy(x, kh, kw, stride, pad, ho, wo):
    """Materialized im2col matrix [N*ho*wo, C*kh*kw]."""
    n, c = x.shape[0], x.shape[1]
    xp = _pad_hw(x, pad)
    view = _patch_view(xp, kh, kw, stride, ho, wo)
    return view.reshape(n * ho * wo, c * kh * kw)


def _corr2d_numpy(x, k, stride, pad, cols=None):
    n, c, h, w = x.shape
    ko, _, kh, kw = k.shape
    ho, wo = _out_hw(h, w, kh, kw, stride, pad)
    if cols is None:
        cols = _cols_numpy(x, kh, kw, stride, pad, ho, wo)
    out = cols @ k.reshape(ko, c * kh * kw).T
    return np.ascontiguousarray(out.reshape(n, ho, wo, ko).transpose(0, 3, 1, 2))


def _col2im_accum_numpy(g, k, stride, pad, h, w):
    n, ko, ho, wo = g.shape
    _, c, kh, kw = k.shape
    hp, wp = h + 2 * pad, w + 2 * pad
    # rows[i, j, c, n, oy, ox] = sum_o g[n, o, oy, ox] * k[o, c, i, j];
    # accumulate in [C, N, ...] layout so the per-tap adds stream contiguously
    rows = np.ascontiguousarray(
        np.tensordot(k.transpose(2, 3, 1, 0), g, axes=([3], [1]))
    )
    xp = np.zeros((c, n, hp, wp))
    for i in range(kh):
        for j in range(kw):
            xp[:, :, i : i + ho * stride : stride, j : j + wo * stride : stride] += (
                rows[i, j]
            )
    return np.ascontiguousarray(
        xp.transpose(1, 0, 2, 3)[:, :, pad : pad + h, pad : pad + w]
    )


def _kernel_grad_numpy(x, g, stride, pad, kh, kw, cols=None):
    n, c, h, w = x.shape
    _, ko, ho, wo = g.shape
    if cols is None:
        cols = _cols_numpy(x, kh, kw, stride, pad, ho, wo)
    gk = g.transpose(0, 2, 3, 1).reshape(n * ho * wo, ko)
    return (gk.T @ cols).reshape(ko, c, kh, kw)


# ---------------------------------------------------------------------------
# numba backend
# ---------------------------------------------------------------------------

if HAS_NUMBA:

    @njit(cache=True, parallel=True, fastmath=True)
    def _corr2d_numba(x, k, stride, pad, out):
        n, c, h, w = x.shape
        ko, _, kh, kw = k.shape
        _, _, ho, wo = out.shape
        for idx in prange(n * ho):
            b = idx // ho
            oy = idx % ho
            acc = np.zeros((ko, wo))
            for ci in range(c):
                for i in range(kh):
                    iy = oy * stride + i - pad
                    if iy < 0 or iy >= h:
                        continue
                    xrow = x[b, ci, iy]
                    for o in range(ko):
                        krow = k[o, ci, i]
                        arow = acc[o]
                        for j in range(kw):
                            kv = krow[j]
                            if kv == 0.0:
                                continue
                            off = j - pad
                            for ox in range(wo):
                                ix = ox * stride + off
                                if 0 <= ix < w:
                                    arow[ox] += xrow[ix] * kv
            out[b, :, oy, :] = acc

    @njit(cache=True, parallel=True, fastmath=True)
    def _col2im_accum_numba(g, k, stride, pad, out):
        n, ko, ho, wo = g.shape
        _, c, kh, kw = k.shape
        _, _, h, w = out.shape
        # parallel over (sample, input channel): disjoint writes
        for idx in prange(n * c):
            b = idx // c
            ci = idx % c
            acc = out[b, ci]
            for o in range(ko):
                grow2 = g[b, o]
                kmat = k[o, ci]
                for oy in range(ho):
                    for i in range(kh):
                        iy = oy * stride + i - pad
                        if iy < 0 or iy >= h:
                            continue
                        arow = acc[iy]
                        grow = grow2[oy]
                        krow = kmat[i]
                        for j in range(kw):
                            kv = krow[j]
                            if kv == 0.0:
                                continue
                            for ox in range(wo):
                                ix = ox * stride + j - pad
                                if 0 <= ix < w:
                                    arow[ix] += grow[ox] * kv

    @njit(cache=True, parallel=True, fastmath=True)
    def _kernel_grad_numba(x, g, stride, pad, gk):
        n, c, h, w = x.shape
        _, ko, ho, wo = g.shape
        _, _, kh, kw = gk.shape
        for o in prange(ko):
            for ci in range(c):
                for i in range(kh):
                    for j in range(kw):
                        acc = 0.0
                        for b in range(n):
                            gmat = g[b, o]
                            xmat = x[b, ci]
                            for oy in range(ho):
                                iy = oy * stride + i - pad
                                if iy < 0 or iy >= h:
                                    continue
                                xrow = xmat[iy]
                                grow = gmat[oy]
                                for ox in range(wo):
                                    ix = ox * stride + j - pad
                                    if 0 <= ix < w:
                                        acc += xrow[ix] * grow[ox]
                        gk[o, ci, i, j] = acc


# ---------------------------------------------------------------------------
# public dispatch
# ---------------------------------------------------------------------------


def corr2d(x, k, stride, pad):
    """Strided cross-correlation of x[N,C,H,W] with k[K,C,kh,kw]."""
    if BACKEND == "numba":
        n, c, h, w = x.shape
        ko, _, kh, kw = k.shape
        ho, wo = _out_hw(h, w, kh, kw, stride, pad)
        out = np.empty((n, ko, ho, wo))
        _corr2d_numba(
            np.ascontiguousarray(x), np.ascontiguousarray(k), stride, pad, out
        )
        return out
    return _corr2d_numpy(x, k, stride, pad)


def corr2d_fwd(x, k, stride, pad):
    """corr2d plus a backward context (the im2col matrix on the numpy path)."""
    if BACKEND == "numba":
        return corr2d(x, k, stride, pad), None
    ko, _, kh, kw = k.shape
    ho, wo = _out_hw(x.shape[2], x.shape[3], kh, kw, stride, pad)
    cols = _cols_numpy(x, kh, kw, stride, pad, ho, wo)
    return _corr2d_numpy(x, k, stride, pad, cols=cols), cols


def kernel_grad_ctx(ctx, x, g, stride, pad, kh, kw):
    """Weight gradient, reusing the forward's im2col context when present."""
    if BACKEND == "numba" or ctx is None:
        return kernel_grad(x, g, stride, pad, kh, kw)
    return _kernel_grad_numpy(x, g, stride, pad, kh, kw, cols=ctx)


def transpose_backward(g, k, x, stride, pad):
    """Both gradients of conv_transpose2d(x, k) given output gradient g.

    Input grad = corr2d(g, k); weight grad contracts patches of g with x.
    The numpy path shares one im2col gather of g between the two.
    """
    ko, c, kh, kw = k.shape
    if BACKEND == "numba":
        gx = corr2d(g, k, stride, pad)
        gk = kernel_grad(g, x, stride, pad, kh, kw)
        return gx, gk
    ho, wo = _out_hw(g.shape[2], g.shape[3], kh, kw, stride, pad)
    cols = _cols_numpy(g, kh, kw, stride, pad, ho, wo)
    gx = _corr2d_numpy(g, k, stride, pad, cols=cols)
    gk = _kernel_grad_numpy(g, x, stride, pad, kh, kw, cols=cols)
    return gx, gk


def col2im_accum(g, k, stride, pad, h, w):
    """Adjoint of corr2d w.r.t. its input: scatter g[N,K,ho,wo] back to [N,C,h,w]."""
    if BACKEND == "numba":
        n = g.shape[0]
        c = k.shape[1]
        out = np.zeros((n, c, h, w))
        _col2im_accum_numba(
            np.ascontiguousarray(g), np.ascontiguousarray(k), stride, pad, out
        )
        return out
    return _col2im_accum_numpy(g, k, stride, pad, h, w)


def kernel_grad(x, g, stride, pad, kh, kw):
    """Gradient of corr2d(x, k) w.r.t. k, given output gradient g."""
    if BACKEND == "numba":
        ko = g.shape[1]
        c = x.shape[1]
        gk = np.empty((ko, c, kh, kw))
        _kernel_grad_numba(
            np.ascontiguousarray(x), np.ascontiguousarray(g), stride, pad, gk
        )
        return gk
    return _kernel_grad_numpy(x, g, stride, pad, kh, kw)
