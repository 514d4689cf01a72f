"""Neural-network kernels on top of the tensor/tape core.

Every kernel is a single tape entry with a hand-derived backward rule,
except the thin composites at the bottom (``linear``, ``l2_normalize``)
which differentiate through the primitive ops they call.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np
from scipy.special import erf

from .tensor import ShapeError, Tensor, as_tensor, take, _record

_INV_SQRT2 = np.float32(1.0 / math.sqrt(2.0))
_INV_SQRT_2PI = np.float32(1.0 / math.sqrt(2.0 * math.pi))


def gelu(x: Tensor) -> Tensor:
    """Exact Gaussian-error-linear unit: ``0.5 * x * (1 + erf(x / sqrt(2)))``."""
    x = as_tensor(x)
    cdf = np.float32(0.5) * (np.float32(1.0) + erf(x.data * _INV_SQRT2))
    out = Tensor(x.data * cdf)

    def bwd(g, needs):
        if not needs[0]:
            return (None,)
        pdf = _INV_SQRT_2PI * np.exp(np.float32(-0.5) * x.data * x.data)
        return (g * (cdf + x.data * pdf),)

    return _record(out, (x,), bwd)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Max-subtracted softmax along ``axis``."""
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    probs = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(probs)

    def bwd(g, needs):
        if not needs[0]:
            return (None,)
        dot = (g * probs).sum(axis=axis, keepdims=True)
        return (probs * (g - dot),)

    return _record(out, (x,), bwd)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = Tensor(shifted - log_z)
    probs = np.exp(out.data)

    def bwd(g, needs):
        if not needs[0]:
            return (None,)
        return (g - probs * g.sum(axis=axis, keepdims=True),)

    return _record(out, (x,), bwd)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then scale-shift."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(
            f"layer_norm scale/shift must have shape ({d},), got {gamma.shape} and {beta.shape}"
        )
    mu = x.data.mean(axis=-1, keepdims=True, dtype=np.float32)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True, dtype=np.float32)
    inv_sigma = 1.0 / np.sqrt(var + np.float32(eps))
    xhat = centered * inv_sigma
    out = Tensor(xhat * gamma.data + beta.data)
    lead_axes = tuple(range(x.ndim - 1))

    def bwd(g, needs):
        gx = ggamma = gbeta = None
        if needs[0]:
            gy = g * gamma.data
            mean_gy = gy.mean(axis=-1, keepdims=True, dtype=np.float32)
            mean_gy_xhat = (gy * xhat).mean(axis=-1, keepdims=True, dtype=np.float32)
            gx = (gy - mean_gy - xhat * mean_gy_xhat) * inv_sigma
        if needs[1]:
            ggamma = (g * xhat).sum(axis=lead_axes)
        if needs[2]:
            gbeta = g.sum(axis=lead_axes)
        return gx, ggamma, gbeta

    return _record(out, (x, gamma, beta), bwd)


def embedding(table: Tensor, ids) -> Tensor:
    """Row lookup ``table[ids]``; gradient scatter-adds duplicate ids."""
    table = as_tensor(table)
    if table.ndim != 2:
        raise ShapeError(f"embedding table must be 2-d, got shape {table.shape}")
    idx = np.asarray(ids, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise IndexError(
            f"embedding ids must lie in [0, {table.shape[0]}), got range "
            f"[{idx.min()}, {idx.max()}]"
        )
    return take(table, idx, axis=0)


def _as_batched(x: Tensor):
    if x.ndim == 3:
        return x.data[None], True
    if x.ndim == 4:
        return x.data, False
    raise ShapeError(f"expected [c,h,w] or [b,c,h,w] input, got shape {x.shape}")


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, out_h: int, out_w: int):
    b, c = xp.shape[:2]
    s0, s1, s2, s3 = xp.strides
    view = np.lib.stride_tricks.as_strided(
        xp,
        shape=(b, c, kh, kw, out_h, out_w),
        strides=(s0, s1, s2, s3, s2 * stride, s3 * stride),
        writeable=False,
    )
    return np.ascontiguousarray(view).reshape(b, c * kh * kw, out_h * out_w)


def conv2d(x: Tensor, w: Tensor, b: Optional[Tensor] = None, stride: int = 1, padding: int = 0) -> Tensor:
    """2-d cross-correlation via im2col; input [c,h,w] or [b,c,h,w].

    ``w`` is [out_c, in_c, kh, kw]; the output spatial size is
    ``(n + 2*padding - k) // stride + 1`` per axis and must be positive.
    """
    x, w = as_tensor(x), as_tensor(w)
    xb, squeeze = _as_batched(x)
    if w.ndim != 4:
        raise ShapeError(f"conv2d weight must be 4-d, got shape {w.shape}")
    out_c, in_c, kh, kw = w.shape
    bsz, c, h, wd = xb.shape
    if c != in_c:
        raise ShapeError(f"conv2d channel mismatch: input has {c}, weight expects {in_c}")
    if b is not None:
        b = as_tensor(b)
        if b.shape != (out_c,):
            raise ShapeError(f"conv2d bias must have shape ({out_c},), got {b.shape}")
    out_h = (h + 2 * padding - kh) // stride + 1
    out_w = (wd + 2 * padding - kw) // stride + 1
    if out_h <= 0 or out_w <= 0:
        raise ShapeError(
            f"conv2d output would be empty for input {h}x{wd}, kernel {kh}x{kw}, "
            f"stride {stride}, padding {padding}"
        )
    xp = np.pad(xb, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    cols = _im2col(xp, kh, kw, stride, out_h, out_w)
    w2 = w.data.reshape(out_c, in_c * kh * kw)
    out_data = (w2 @ cols).reshape(bsz, out_c, out_h, out_w)
    if b is not None:
        out_data = out_data + b.data[:, None, None]
    out = Tensor(out_data[0] if squeeze else out_data)
    inputs = (x, w) if b is None else (x, w, b)

    def bwd(g, needs):
        gb4 = g[None] if squeeze else g
        g2 = gb4.reshape(bsz, out_c, out_h * out_w)
        gx = gw = gbias = None
        if needs[1]:
            gw = np.matmul(g2, cols.transpose(0, 2, 1)).sum(axis=0).reshape(w.shape)
        if needs[0]:
            gcols = np.matmul(w2.T, g2)
            gcols = gcols.reshape(bsz, in_c, kh, kw, out_h, out_w)
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i : i + stride * out_h : stride, j : j + stride * out_w : stride] += gcols[
                        :, :, i, j
                    ]
            gx = gxp[:, :, padding : padding + h, padding : padding + wd]
            gx = np.ascontiguousarray(gx[0] if squeeze else gx)
        if b is not None and needs[2]:
            gbias = g2.sum(axis=(0, 2))
        grads = (gx, gw) if b is None else (gx, gw, gbias)
        return grads

    return _record(out, inputs, bwd)


def max_pool2d(x: Tensor, size: int) -> Tensor:
    """Non-overlapping max pooling (window == stride == ``size``).

    Odd trailing rows/cols are covered by padding with -inf, so every output
    cell still reflects only real inputs; ties route the gradient to the
    lowest flat window index.
    """
    x = as_tensor(x)
    if size < 1:
        raise ShapeError(f"max_pool2d size must be >=1, got {size}")
    xb, squeeze = _as_batched(x)
    bsz, c, h, w = xb.shape
    out_h = -(-h // size)
    out_w = -(-w // size)
    pad_h = out_h * size - h
    pad_w = out_w * size - w
    xp = np.pad(
        xb, ((0, 0), (0, 0), (0, pad_h), (0, pad_w)), constant_values=np.float32(-np.inf)
    )
    windows = (
        xp.reshape(bsz, c, out_h, size, out_w, size)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(bsz, c, out_h, out_w, size * size)
    )
    arg = windows.argmax(axis=-1)
    out_data = np.take_along_axis(windows, arg[..., None], axis=-1)[..., 0]
    out = Tensor(out_data[0] if squeeze else out_data)

    def bwd(g, needs):
        if not needs[0]:
            return (None,)
        gb4 = g[None] if squeeze else g
        gw = np.zeros((bsz, c, out_h, out_w, size * size), dtype=np.float32)
        np.put_along_axis(gw, arg[..., None], gb4[..., None], axis=-1)
        gp = (
            gw.reshape(bsz, c, out_h, out_w, size, size)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(bsz, c, out_h * size, out_w * size)
        )
        gx = np.ascontiguousarray(gp[:, :, :h, :w])
        return (gx[0] if squeeze else gx,)

    return _record(out, (x,), bwd)


def _interp_axis(n_in: int, n_out: int):
    # Half-pixel source centers, clamped at the borders.
    pos = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    pos = np.clip(pos, 0.0, n_in - 1.0)
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    w_hi = (pos - lo).astype(np.float32)
    w_lo = np.float32(1.0) - w_hi
    return lo, hi, w_lo, w_hi


def interpolate_bilinear(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Bilinear resize of the trailing two axes; input [c,h,w] or [b,c,h,w]."""
    x = as_tensor(x)
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"target size must be positive, got {out_h}x{out_w}")
    xb, squeeze = _as_batched(x)
    h, w = xb.shape[-2:]
    ylo, yhi, wy_lo, wy_hi = _interp_axis(h, out_h)
    xlo, xhi, wx_lo, wx_hi = _interp_axis(w, out_w)
    rows = xb[..., ylo, :] * wy_lo[:, None] + xb[..., yhi, :] * wy_hi[:, None]
    out_data = rows[..., xlo] * wx_lo + rows[..., xhi] * wx_hi
    out = Tensor(out_data[0] if squeeze else out_data)
    in_shape = xb.shape

    def bwd(g, needs):
        if not needs[0]:
            return (None,)
        gb = g[None] if squeeze else g
        g_rows = np.zeros(in_shape[:-2] + (out_h, w), dtype=np.float32)
        np.add.at(g_rows, (Ellipsis, xlo), gb * wx_lo)
        np.add.at(g_rows, (Ellipsis, xhi), gb * wx_hi)
        gx = np.zeros(in_shape, dtype=np.float32)
        np.add.at(gx, (Ellipsis, ylo, slice(None)), g_rows * wy_lo[:, None])
        np.add.at(gx, (Ellipsis, yhi, slice(None)), g_rows * wy_hi[:, None])
        return (gx[0] if squeeze else gx,)

    return _record(out, (x,), bwd)


def linear(x: Tensor, w: Tensor, b: Optional[Tensor] = None) -> Tensor:
    """Affine map ``x @ w + b`` with ``w`` shaped [in_features, out_features].

    A 1-d input is treated as a single row and squeezed back afterwards.
    """
    from .tensor import add, as_tensor, matmul, reshape

    x = as_tensor(x)
    vector = x.ndim == 1
    if vector:
        x = reshape(x, (1, x.shape[0]))
    out = matmul(x, w)
    if b is not None:
        out = add(out, b)
    if vector:
        out = reshape(out, (out.shape[-1],))
    return out


def l2_normalize(x: Tensor, axis: int = -1, eps: float = 1e-12) -> Tensor:
    """Scale vectors along ``axis`` to unit Euclidean norm."""
    from .tensor import div, mul, sqrt, tensor_sum, add

    sq = tensor_sum(mul(x, x), axis=axis, keepdims=True)
    norm = sqrt(add(sq, Tensor(np.float32(eps))))
    return div(x, norm)
