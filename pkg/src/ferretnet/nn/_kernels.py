"""Compiled loops for depthwise convolution and training-mode batch norm.

Plain numpy needs one temporary per kernel tap for depthwise convs, which
made them the slowest layers by far. These kernels walk the padded input
directly; the batch-norm kernels fuse the statistics and normalisation
passes and accumulate in float64. Stride-1 variants keep the innermost loop unit-stride so LLVM
can vectorise it; no fastmath, so results are reproducible run to run.
"""
import numba
import numpy as np


@numba.njit(cache=True)
def _forward_s1(xp, w, dilation, out):
    n_, c_, ho, wo = out.shape
    kh, kw = w.shape[2], w.shape[3]
    for n in range(n_):
        for c in range(c_):
            xpc = xp[n, c]
            oc = out[n, c]
            for y in range(ho):
                orow = oc[y]
                for i in range(kh):
                    xrow = xpc[y + i * dilation]
                    for j in range(kw):
                        wv = w[c, 0, i, j]
                        c0 = j * dilation
                        for x in range(wo):
                            orow[x] += wv * xrow[c0 + x]


@numba.njit(cache=True)
def _forward_strided(xp, w, stride, dilation, out):
    n_, c_, ho, wo = out.shape
    kh, kw = w.shape[2], w.shape[3]
    for n in range(n_):
        for c in range(c_):
            for y in range(ho):
                for i in range(kh):
                    r = y * stride + i * dilation
                    for j in range(kw):
                        wv = w[c, 0, i, j]
                        c0 = j * dilation
                        for x in range(wo):
                            out[n, c, y, x] += wv * xp[n, c, r, c0 + x * stride]


@numba.njit(cache=True)
def _backward_input_strided(g, w, stride, dilation, gxp):
    n_, c_, ho, wo = g.shape
    kh, kw = w.shape[2], w.shape[3]
    for n in range(n_):
        for c in range(c_):
            for y in range(ho):
                for i in range(kh):
                    r = y * stride + i * dilation
                    for j in range(kw):
                        wv = w[c, 0, i, j]
                        c0 = j * dilation
                        for x in range(wo):
                            gxp[n, c, r, c0 + x * stride] += wv * g[n, c, y, x]


@numba.njit(cache=True)
def _backward_weight(g, xp, stride, dilation, gw):
    n_, c_, ho, wo = g.shape
    kh, kw = gw.shape[2], gw.shape[3]
    # per-lane float64 accumulators keep the inner loop vectorisable
    acc = np.zeros((kh, kw, wo))
    for c in range(c_):
        acc[:] = 0.0
        for n in range(n_):
            for y in range(ho):
                grow = g[n, c, y]
                for i in range(kh):
                    r = y * stride + i * dilation
                    for j in range(kw):
                        c0 = j * dilation
                        a = acc[i, j]
                        if stride == 1:
                            xrow = xp[n, c, r, c0:c0 + wo]
                            for x in range(wo):
                                a[x] += grow[x] * xrow[x]
                        else:
                            for x in range(wo):
                                a[x] += grow[x] * xp[n, c, r, c0 + x * stride]
        for i in range(kh):
            for j in range(kw):
                gw[c, 0, i, j] = acc[i, j].sum()


def as_contiguous(a):
    return a if a.flags.c_contiguous else np.ascontiguousarray(a)


@numba.njit(cache=True)
def _forward_s1_3x3(xp, w, dilation, out):
    # same tap order as _forward_s1, but the sum stays in a register
    n_, c_, ho, wo = out.shape
    d = dilation
    for n in range(n_):
        for c in range(c_):
            w00, w01, w02 = w[c, 0, 0, 0], w[c, 0, 0, 1], w[c, 0, 0, 2]
            w10, w11, w12 = w[c, 0, 1, 0], w[c, 0, 1, 1], w[c, 0, 1, 2]
            w20, w21, w22 = w[c, 0, 2, 0], w[c, 0, 2, 1], w[c, 0, 2, 2]
            xpc = xp[n, c]
            oc = out[n, c]
            for y in range(ho):
                r0 = xpc[y]
                r1 = xpc[y + d]
                r2 = xpc[y + 2 * d]
                orow = oc[y]
                for x in range(wo):
                    s = orow[x]
                    s += w00 * r0[x]
                    s += w01 * r0[x + d]
                    s += w02 * r0[x + 2 * d]
                    s += w10 * r1[x]
                    s += w11 * r1[x + d]
                    s += w12 * r1[x + 2 * d]
                    s += w20 * r2[x]
                    s += w21 * r2[x + d]
                    s += w22 * r2[x + 2 * d]
                    orow[x] = s


def depthwise_forward(xp, w, stride, dilation, out):
    if stride == 1 and w.shape[2] == 3 and w.shape[3] == 3:
        _forward_s1_3x3(xp, w, dilation, out)
    elif stride == 1:
        _forward_s1(xp, w, dilation, out)
    else:
        _forward_strided(xp, w, stride, dilation, out)


def depthwise_backward_input(g, w, stride, dilation, gxp):
    if stride == 1:
        # correlation of the fully padded gradient with the flipped kernel;
        # writes each input-gradient element once instead of scattering
        kh, kw = w.shape[2], w.shape[3]
        ph, pw = (kh - 1) * dilation, (kw - 1) * dilation
        n, c, ho, wo = g.shape
        gp = np.zeros((n, c, ho + 2 * ph, wo + 2 * pw), dtype=g.dtype)
        gp[:, :, ph:ph + ho, pw:pw + wo] = g
        wf = np.ascontiguousarray(w[:, :, ::-1, ::-1])
        depthwise_forward(gp, wf, 1, dilation, gxp)
    else:
        _backward_input_strided(g, w, stride, dilation, gxp)


def depthwise_backward_weight(g, xp, stride, dilation, gw):
    _backward_weight(g, xp, stride, dilation, gw)


@numba.njit(cache=True)
def _channel_moments(x, c):
    """Mean and biased variance of channel `c` (float64, 8-lane accumulators)."""
    n_, _, h_, w_ = x.shape
    hw = h_ * w_
    lanes = np.zeros(8)
    for n in range(n_):
        xc = x[n, c].reshape(hw)
        for k in range(hw):
            lanes[k & 7] += xc[k]
    mu = lanes.sum() / (n_ * hw)
    lanes[:] = 0.0
    for n in range(n_):
        xc = x[n, c].reshape(hw)
        for k in range(hw):
            d = xc[k] - mu
            lanes[k & 7] += d * d
    return mu, lanes.sum() / (n_ * hw)


@numba.njit(cache=True)
def batchnorm_train_forward(x, gamma, beta, eps, out, xhat, mean_out, var_out):
    """Normalise with batch statistics; fills `out`, `xhat`, batch mean and biased variance."""
    n_, c_, h_, w_ = x.shape
    hw = h_ * w_
    for c in range(c_):
        mu, var = _channel_moments(x, c)
        inv = 1.0 / np.sqrt(var + eps)
        mean_out[c] = mu
        var_out[c] = var
        gm = gamma[c]
        bt = beta[c]
        muf = x.dtype.type(mu)
        invf = x.dtype.type(inv)
        for n in range(n_):
            xc = x[n, c].reshape(hw)
            hc = xhat[n, c].reshape(hw)
            oc = out[n, c].reshape(hw)
            for k in range(hw):
                v = (xc[k] - muf) * invf
                hc[k] = v
                oc[k] = v * gm + bt


@numba.njit(cache=True)
def batchnorm_train_backward(g, xhat, gamma, invstd, gx, ggamma, gbeta):
    n_, c_, h_, w_ = g.shape
    hw = h_ * w_
    m = n_ * hw
    for c in range(c_):
        sg = 0.0
        sgx = 0.0
        for n in range(n_):
            gc = g[n, c].reshape(hw)
            hc = xhat[n, c].reshape(hw)
            for k in range(hw):
                sg += gc[k]
                sgx += gc[k] * hc[k]
        ggamma[c] = sgx
        gbeta[c] = sg
        scale = gamma[c] * invstd[c]
        a = sg / m
        b = sgx / m
        for n in range(n_):
            gc = g[n, c].reshape(hw)
            hc = xhat[n, c].reshape(hw)
            oc = gx[n, c].reshape(hw)
            for k in range(hw):
                oc[k] = (gc[k] - a - hc[k] * b) * scale


@numba.njit(cache=True)
def relu_forward(x, out):
    xf = x.reshape(-1)
    of = out.reshape(-1)
    for k in range(xf.size):
        v = xf[k]
        of[k] = v if v > 0 else 0.0


@numba.njit(cache=True)
def relu_backward(g, y, out):
    gf = g.reshape(-1)
    yf = y.reshape(-1)
    of = out.reshape(-1)
    for k in range(gf.size):
        of[k] = gf[k] if yf[k] > 0 else 0.0
