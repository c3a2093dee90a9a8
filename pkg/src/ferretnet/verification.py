"""Finite-difference gradient checks for every layer type and FerretNet-S.

All checks run in float64. Layer checks use the quadratic probe loss
``sum(r*y) + 0.5*sum((s*y)**2)`` so that every output coordinate carries a
distinct gradient; the full-model check uses BCE-with-logits.
"""
from __future__ import annotations

import numpy as np

from .model import build_ferretnet
from .nn import BatchNorm2d, Conv2d, Linear, Tensor, default_dtype, finite_diff_gradcheck, no_grad
from .nn import functional as F
from .nn.gradcheck import probe_loss, quadratic_probe

LAYER_TOLERANCE = 1e-4
MODEL_TOLERANCE = 1e-3
STEP = 1e-3


def _away_from_zero(rng, shape, margin=0.1):
    # keeps ReLU inputs clear of the kink by more than the FD step
    x = rng.uniform(margin, 1.0, size=shape)
    return x * rng.choice([-1.0, 1.0], size=shape)


def _check_module(module, x, seed):
    y = module(x)
    r, s = quadratic_probe(y.shape, seed)
    tensors = [x] + list(module.parameters())
    return finite_diff_gradcheck(lambda: probe_loss(module(x), r, s), tensors, h=STEP)


def _check_fn(fn, inputs, seed):
    y = fn(*inputs)
    r, s = quadratic_probe(y.shape, seed)
    return finite_diff_gradcheck(lambda: probe_loss(fn(*inputs), r, s), list(inputs), h=STEP)


def check_conv(seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    with default_dtype(np.float64):
        conv = Conv2d(3, 4, 3, stride=2, padding=1, rng=rng)
        conv.bias.data = rng.standard_normal(4)
    return _check_module(conv, Tensor(rng.standard_normal((2, 3, 7, 7))), seed)


def check_grouped_conv(seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    with default_dtype(np.float64):
        conv = Conv2d(4, 6, 3, padding=1, groups=2, rng=rng)
    return _check_module(conv, Tensor(rng.standard_normal((2, 4, 6, 6))), seed)


def check_pointwise_conv(seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    with default_dtype(np.float64):
        conv = Conv2d(5, 3, 1, rng=rng)
    return _check_module(conv, Tensor(rng.standard_normal((2, 5, 4, 4))), seed)


def check_depthwise_conv(seed: int = 0, stride: int = 1) -> float:
    rng = np.random.default_rng(seed)
    with default_dtype(np.float64):
        conv = Conv2d(4, 4, 3, stride=stride, padding=2, dilation=2, groups=4, rng=rng)
    return _check_module(conv, Tensor(rng.standard_normal((2, 4, 8, 8))), seed)


def check_batchnorm(seed: int = 0, training: bool = True) -> float:
    rng = np.random.default_rng(seed)
    with default_dtype(np.float64):
        bn = BatchNorm2d(3)
    bn.gamma.data = rng.uniform(0.5, 1.5, 3)
    bn.beta.data = rng.standard_normal(3)
    bn._buffers["running_mean"][:] = rng.standard_normal(3)
    bn._buffers["running_var"][:] = rng.uniform(0.5, 2.0, 3)
    bn.train(training)
    return _check_module(bn, Tensor(rng.standard_normal((4, 3, 5, 5))), seed)


def check_relu(seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    return _check_fn(F.relu, [Tensor(_away_from_zero(rng, (2, 3, 4, 4)))], seed)


def check_global_avg_pool(seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    return _check_fn(F.global_avg_pool, [Tensor(rng.standard_normal((2, 3, 5, 4)))], seed)


def check_dropout_eval(seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    return _check_fn(lambda x: F.dropout(x, 0.5, training=False) * 1.0, [Tensor(rng.standard_normal((3, 6)))], seed)


def check_linear(seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    with default_dtype(np.float64):
        lin = Linear(6, 3, rng=rng)
    return _check_module(lin, Tensor(rng.standard_normal((4, 6))), seed)


def check_concat(seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    a, b = Tensor(rng.standard_normal((2, 2, 3, 3))), Tensor(rng.standard_normal((2, 3, 3, 3)))
    return _check_fn(lambda u, v: F.concat([u, v], axis=1), [a, b], seed)


def check_bce(seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    x = Tensor(rng.standard_normal((8, 1)) * 3)
    t = (rng.random(8) < 0.5).astype(np.float64)
    return finite_diff_gradcheck(lambda: F.bce_with_logits(x, t), [x], h=STEP)


def check_dilated_bn_relu(seed: int = 0) -> float:
    """3x3 depthwise dilated conv + BN(train) + ReLU on a 2x8x8x8 input."""
    rng = np.random.default_rng(seed)
    with default_dtype(np.float64):
        conv = Conv2d(8, 8, 3, padding=2, dilation=2, groups=8, bias=False, rng=rng)
        bn = BatchNorm2d(8)
    x = Tensor(rng.standard_normal((2, 8, 8, 8)))
    # place each channel's shift in the middle of the widest gap between
    # normalised values so no pre-activation sits near the ReLU kink
    with no_grad():
        xhat = bn(conv(x)).data
    for c in range(8):
        v = np.sort(xhat[:, c].ravel())
        gaps = np.diff(v)
        core = np.abs(v[:-1]) < 1.0
        k = int(np.argmax(np.where(core, gaps, -1.0)))
        bn.beta.data[c] = -(v[k] + v[k + 1]) / 2
    net = lambda v: F.relu(bn(conv(v)))  # noqa: E731
    y = net(x)
    r, s = quadratic_probe(y.shape, seed)
    tensors = [x, conv.weight, bn.gamma, bn.beta]
    return finite_diff_gradcheck(lambda: probe_loss(net(x), r, s), tensors, h=STEP)


def _widest_gap_midpoint(values: np.ndarray, window: float = 2.0) -> float:
    v = np.sort(values.ravel())
    gaps = np.diff(v)
    core = np.abs(v[:-1]) < window
    if not core.any():
        return 0.0
    k = int(np.argmax(np.where(core, gaps, -1.0)))
    return (v[k] + v[k + 1]) / 2


def _clear_relu_kinks(model, x) -> float:
    """Shift BN offsets so every ReLU input sits mid-gap, away from zero.

    Every ReLU in FerretNet is fed by exactly one batch norm (through the
    residual add for block outputs), and both run in module order, so the
    k-th recorded ReLU input belongs to the k-th batch norm. Offsets are
    fixed one layer at a time because each shift changes everything
    downstream. Returns the smallest distance from zero of any ReLU input.
    """
    bns = [m for m in model.modules() if isinstance(m, BatchNorm2d)]
    captured = []
    relu = F.relu

    def recording_relu(t):
        captured.append(t.data.copy())
        return relu(t)

    F.relu = recording_relu
    try:
        for k, bn in enumerate(bns):
            captured.clear()
            with no_grad():
                model(x)
            z = captured[k]
            for c in range(z.shape[1]):
                bn.beta.data[c] -= _widest_gap_midpoint(z[:, c])
        captured.clear()
        with no_grad():
            model(x)
    finally:
        F.relu = relu
    return float(min(np.abs(z).min() for z in captured))


def check_ferretnet_s(seed: int = 0, samples_per_tensor: int | None = 12) -> float:
    """Full FerretNet-S (train-mode BN, dropout off) + BCE on a 2x3x32x32 batch.

    Batch-norm offsets are first moved so that no ReLU input lies near the
    kink; `samples_per_tensor` coordinates are checked per tensor.
    """
    rng = np.random.default_rng(seed)
    with default_dtype(np.float64):
        model = build_ferretnet("S", dropout_p=0.0, seed=seed)
    model.train()
    x = Tensor(rng.standard_normal((2, 3, 32, 32)))
    t = np.array([0.0, 1.0])
    _clear_relu_kinks(model, x)
    tensors = [x] + list(model.parameters())
    return finite_diff_gradcheck(lambda: F.bce_with_logits(model(x), t), tensors, h=STEP,
                                 max_checks_per_tensor=samples_per_tensor, rng=np.random.default_rng(seed))


LAYER_CHECKS = {
    "conv2d": check_conv,
    "conv2d_grouped": check_grouped_conv,
    "conv2d_pointwise": check_pointwise_conv,
    "conv2d_depthwise_dilated": check_depthwise_conv,
    "conv2d_depthwise_strided": lambda seed=0: check_depthwise_conv(seed, stride=2),
    "batchnorm_train": check_batchnorm,
    "batchnorm_eval": lambda seed=0: check_batchnorm(seed, training=False),
    "relu": check_relu,
    "global_avg_pool": check_global_avg_pool,
    "dropout_eval": check_dropout_eval,
    "linear": check_linear,
    "concat": check_concat,
    "bce_with_logits": check_bce,
    "dilated_conv_bn_relu": check_dilated_bn_relu,
}


def run_gradcheck_suite(seed: int = 0, include_model: bool = True) -> list:
    """Run every check; each record has name, max_rel_error, tolerance, passed."""
    results = []
    for name, fn in LAYER_CHECKS.items():
        err = fn(seed)
        results.append({"name": name, "max_rel_error": err, "tolerance": LAYER_TOLERANCE,
                        "passed": bool(err < LAYER_TOLERANCE)})
    if include_model:
        err = check_ferretnet_s(seed)
        results.append({"name": "ferretnet_s", "max_rel_error": err, "tolerance": MODEL_TOLERANCE,
                        "passed": bool(err < MODEL_TOLERANCE)})
    return results
