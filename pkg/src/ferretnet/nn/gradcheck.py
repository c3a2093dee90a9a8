"""Finite-difference verification of the analytic gradients."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


def finite_diff_gradcheck(loss_fn: Callable[[], Tensor], tensors: Sequence[Tensor], h: float = 1e-3,
                          max_checks_per_tensor: int | None = None,
                          rng: np.random.Generator | None = None) -> float:
    """Largest relative error between backprop and central differences.

    `loss_fn` must rebuild the scalar loss from the current contents of
    `tensors` (and be deterministic). The error for one coordinate is
    ``|analytic - numeric| / max(1, |analytic|)``. When
    `max_checks_per_tensor` is given, that many coordinates are sampled
    per tensor instead of checking every element.
    """
    for t in tensors:
        if t.dtype != np.float64:
            raise TypeError("gradient checks require float64 tensors")
        t.data = np.ascontiguousarray(t.data)
        t.requires_grad = True
        t.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]

    rng = rng if rng is not None else np.random.default_rng(0)
    worst = 0.0
    for t, a in zip(tensors, analytic):
        flat = t.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_checks_per_tensor is not None and flat.size > max_checks_per_tensor:
            idx = rng.choice(flat.size, size=max_checks_per_tensor, replace=False)
        for k in idx:
            orig = flat[k]
            flat[k] = orig + h
            fp = float(loss_fn().data)
            flat[k] = orig - h
            fm = float(loss_fn().data)
            flat[k] = orig
            num = (fp - fm) / (2 * h)
            ana = float(a.reshape(-1)[k])
            if not (np.isfinite(num) and np.isfinite(ana)):
                raise FloatingPointError(f"non-finite gradient at element {k}: analytic={ana}, numeric={num}")
            worst = max(worst, abs(ana - num) / max(1.0, abs(ana)))
    return worst


def quadratic_probe(shape, seed: int = 0):
    """Fixed random weights for the probe loss ``sum(r*y) + 0.5*sum((s*y)**2)``."""
    rng = np.random.default_rng(seed)
    return rng.standard_normal(shape), rng.standard_normal(shape)


def probe_loss(y: Tensor, r: np.ndarray, s: np.ndarray) -> Tensor:
    return (y * r).sum() + ((y * s) ** 2).sum() * 0.5
