"""Differentiable operations used by FerretNet.

All image tensors are NCHW. Every function takes and returns `Tensor`
objects and registers a backward closure when any input requires grad.
"""
from __future__ import annotations

import numpy as np

from . import _kernels
from .tensor import Tensor, _make

# im2col buffers above this many elements are processed in batch chunks
_MAX_COL_ELEMENTS = 1 << 25


def conv_output_size(size: int, kernel: int, stride: int, padding: int, dilation: int) -> int:
    return (size + 2 * padding - dilation * (kernel - 1) - 1) // stride + 1


def _tap(xp, i, j, dilation, stride, ho, wo):
    """Strided view of the padded input seen by kernel tap (i, j)."""
    r0, c0 = i * dilation, j * dilation
    return xp[:, :, r0 : r0 + stride * (ho - 1) + 1 : stride, c0 : c0 + stride * (wo - 1) + 1 : stride]


def _pad(x, padding):
    if padding == 0:
        return x
    n, c, h, w = x.shape
    out = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=x.dtype)
    out[:, :, padding:padding + h, padding:padding + w] = x
    return out


def _im2col(xp, groups, kh, kw, dilation, stride, ho, wo):
    n, c = xp.shape[:2]
    cin_g = c // groups
    cols = np.empty((n, groups, cin_g, kh, kw, ho, wo), dtype=xp.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, :, i, j] = _tap(xp, i, j, dilation, stride, ho, wo).reshape(n, groups, cin_g, ho, wo)
    return cols.reshape(n, groups, cin_g * kh * kw, ho * wo)


def _col2im_add(gcols, gxp, groups, kh, kw, dilation, stride, ho, wo):
    n, c = gxp.shape[:2]
    cin_g = c // groups
    gcols = gcols.reshape(n, groups, cin_g, kh, kw, ho, wo)
    for i in range(kh):
        for j in range(kw):
            _tap(gxp, i, j, dilation, stride, ho, wo)[...] += gcols[:, :, :, i, j].reshape(n, c, ho, wo)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1,
           padding: int = 0, dilation: int = 1, groups: int = 1) -> Tensor:
    """2-D cross-correlation with zero padding and contiguous channel groups."""
    xd, w = x.data, weight.data
    if xd.ndim != 4 or w.ndim != 4:
        raise ValueError(f"conv2d expects 4-D input and weight, got {xd.shape} and {w.shape}")
    n, cin, h, wd = xd.shape
    cout, cin_g, kh, kw = w.shape
    if groups < 1 or cin % groups or cout % groups:
        raise ValueError(f"groups={groups} must divide in_channels={cin} and out_channels={cout}")
    if cin_g * groups != cin:
        raise ValueError(f"weight expects {cin_g * groups} input channels, input has {cin}")
    ho = conv_output_size(h, kh, stride, padding, dilation)
    wo = conv_output_size(wd, kw, stride, padding, dilation)
    if ho < 1 or wo < 1:
        raise ValueError(f"input {h}x{wd} too small for kernel {kh}x{kw} (dilation {dilation}, padding {padding})")
    if bias is not None and bias.data.shape != (cout,):
        raise ValueError(f"bias must have shape ({cout},), got {bias.data.shape}")

    cout_g = cout // groups
    xp = _pad(xd, padding)
    depthwise = cin_g == 1 and cout_g == 1
    pointwise = kh == kw == 1 and stride == 1 and padding == 0

    if depthwise:
        dtype = np.result_type(xd, w)
        xp = _kernels.as_contiguous(xp.astype(dtype, copy=False))
        wk = _kernels.as_contiguous(w.astype(dtype, copy=False))
        out = np.zeros((n, cout, ho, wo), dtype=dtype)
        _kernels.depthwise_forward(xp, wk, stride, dilation, out)
        cols = None
    else:
        wm = w.reshape(groups, cout_g, cin_g * kh * kw)
        if pointwise:
            cols = xd.reshape(n, groups, cin_g, h * wd)
            out = np.matmul(wm, cols)
        else:
            chunk = max(1, _MAX_COL_ELEMENTS // max(1, cin * kh * kw * ho * wo))
            if chunk >= n:
                cols = _im2col(xp, groups, kh, kw, dilation, stride, ho, wo)
                out = np.matmul(wm, cols)
            else:
                # only reachable for very large inference batches; skip saving columns
                cols = None
                out = np.concatenate([
                    np.matmul(wm, _im2col(xp[s:s + chunk], groups, kh, kw, dilation, stride, ho, wo))
                    for s in range(0, n, chunk)
                ])
        out = out.reshape(n, cout, ho, wo)
    if bias is not None:
        out += bias.data[:, None, None]

    def backward(g):
        gx = gw = gb = None
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        if depthwise:
            gc = _kernels.as_contiguous(g.astype(xp.dtype, copy=False))
            if weight.requires_grad:
                gw = np.empty(w.shape, dtype=xp.dtype)
                _kernels.depthwise_backward_weight(gc, xp, stride, dilation, gw)
            if x.requires_grad:
                gxp = np.zeros_like(xp)
                _kernels.depthwise_backward_input(gc, wk, stride, dilation, gxp)
                gx = gxp[:, :, padding:padding + h, padding:padding + wd] if padding else gxp
        else:
            gm = g.reshape(n, groups, cout_g, ho * wo)
            if weight.requires_grad:
                c = cols if cols is not None else _im2col(xp, groups, kh, kw, dilation, stride, ho, wo)
                gw = np.matmul(gm, c.transpose(0, 1, 3, 2)).sum(axis=0).reshape(w.shape)
            if x.requires_grad:
                gcols = np.matmul(wm.transpose(0, 2, 1), gm)
                if pointwise:
                    gx = gcols.reshape(xd.shape)
                else:
                    gxp = np.zeros_like(xp)
                    _col2im_add(gcols, gxp, groups, kh, kw, dilation, stride, ho, wo)
                    gx = gxp[:, :, padding:padding + h, padding:padding + wd] if padding else gxp
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _make(out, parents, backward)


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: np.ndarray,
               running_var: np.ndarray, training: bool, momentum: float = 0.1,
               eps: float = 1e-5) -> Tensor:
    """Per-channel batch normalisation over the (N, H, W) axes.

    In training mode the batch statistics (biased variance) normalise the
    input and the running statistics are updated in place; the running
    variance tracks the unbiased estimate.
    """
    xd = x.data
    if xd.ndim != 4 or xd.shape[1] != gamma.data.shape[0]:
        raise ValueError(f"batch_norm: input {xd.shape} does not match {gamma.data.shape[0]} channels")
    gd = gamma.data[:, None, None]
    m = xd.shape[0] * xd.shape[2] * xd.shape[3]

    if training:
        if m < 2:
            raise ValueError("batch_norm in training mode needs more than one value per channel")
        xc = _kernels.as_contiguous(xd)
        out = np.empty_like(xc)
        xhat = np.empty_like(xc)
        mean = np.empty(xd.shape[1])
        var = np.empty(xd.shape[1])
        _kernels.batchnorm_train_forward(xc, gamma.data, beta.data, eps, out, xhat, mean, var)
        invstd = 1.0 / np.sqrt(var + eps)
        running_mean *= 1 - momentum
        running_mean += momentum * mean
        running_var *= 1 - momentum
        running_var += momentum * var * (m / (m - 1))
    else:
        invstd = 1.0 / np.sqrt(running_var + eps)
        xhat = ((xd - running_mean[:, None, None]) * invstd[:, None, None]).astype(xd.dtype, copy=False)
        out = xhat * gd + beta.data[:, None, None]

    def backward(g):
        gx = None
        if training:
            gc = _kernels.as_contiguous(g.astype(xhat.dtype, copy=False))
            gx = np.empty_like(gc)
            ggamma = np.empty(gc.shape[1])
            gbeta = np.empty(gc.shape[1])
            _kernels.batchnorm_train_backward(gc, xhat, gamma.data, invstd, gx, ggamma, gbeta)
            return gx, ggamma, gbeta
        ggamma = np.einsum("nchw,nchw->c", g, xhat) if gamma.requires_grad else None
        gbeta = g.sum(axis=(0, 2, 3)) if beta.requires_grad else None
        if x.requires_grad:
            gx = g * (gamma.data * invstd).astype(g.dtype)[:, None, None]
        return gx, ggamma, gbeta

    return _make(out, (x, gamma, beta), backward)


def relu(x: Tensor) -> Tensor:
    xd = _kernels.as_contiguous(x.data)
    out = np.empty_like(xd)
    _kernels.relu_forward(xd, out)

    def backward(g):
        gx = np.empty_like(out)
        _kernels.relu_backward(_kernels.as_contiguous(g.astype(out.dtype, copy=False)), out, gx)
        return (gx,)

    return _make(out, (x,), backward)


def global_avg_pool(x: Tensor) -> Tensor:
    """(N, C, H, W) -> (N, C)."""
    xd = x.data
    hw = xd.shape[2] * xd.shape[3]
    shape = xd.shape

    def backward(g):
        return (np.broadcast_to((g / hw)[:, :, None, None], shape),)

    return _make(xd.mean(axis=(2, 3)), (x,), backward)


def dropout(x: Tensor, p: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: survivors are scaled by 1/(1-p); identity when not training."""
    if not 0 <= p < 1:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0:
        return x
    rng = rng if rng is not None else np.random.default_rng()
    mask = (rng.random(x.data.shape) >= p).astype(x.data.dtype) / (1 - p)
    return _make(x.data * mask, (x,), lambda g: (g * mask,))


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """x @ weight.T + bias with weight of shape (out, in)."""
    xd, w = x.data, weight.data
    out = xd @ w.T
    if bias is not None:
        out = out + bias.data

    def backward(g):
        gx = g @ w if x.requires_grad else None
        gw = g.T @ xd if weight.requires_grad else None
        gb = g.sum(axis=0) if bias is not None and bias.requires_grad else None
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _make(out, parents, backward)


def concat(tensors, axis: int = 1) -> Tensor:
    tensors = list(tensors)
    sizes = np.cumsum([t.data.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, sizes, axis=axis))

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward)


def sigmoid(x):
    """Numerically stable logistic function on arrays."""
    x = np.asarray(x)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def bce_with_logits(logits: Tensor, targets) -> Tensor:
    """Mean binary cross-entropy on raw logits.

    Uses ``max(x, 0) - x*t + log1p(exp(-|x|))`` so large logits do not
    overflow.
    """
    x = logits.data
    t = np.asarray(targets.data if isinstance(targets, Tensor) else targets, dtype=x.dtype)
    t = t.reshape(x.shape)
    if x.size == 0:
        raise ValueError("bce_with_logits on an empty batch")
    loss = np.maximum(x, 0) - x * t + np.log1p(np.exp(-np.abs(x)))
    n = x.size

    def backward(g):
        return ((sigmoid(x) - t) * (g / n),)

    return _make(np.asarray(loss.mean(), dtype=x.dtype), (logits,), backward)
