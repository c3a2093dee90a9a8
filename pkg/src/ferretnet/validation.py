"""Input checks shared by the estimators, data pipeline and CLI."""
from __future__ import annotations

import numbers

import numpy as np


def check_image(image, name: str = "image", dtype=np.float32) -> np.ndarray:
    """Return `image` as a finite (C, H, W) float array in [0, 1].

    uint8 input is scaled by 1/255; other integer input is rejected because
    its range is ambiguous.
    """
    arr = np.asarray(image)
    if arr.ndim != 3:
        raise ValueError(f"{name} must have shape (C, H, W), got {arr.shape}")
    if min(arr.shape) < 1:
        raise ValueError(f"{name} has an empty dimension: {arr.shape}")
    if arr.dtype == np.uint8:
        return (arr / 255.0).astype(dtype)
    if not np.issubdtype(arr.dtype, np.floating):
        raise TypeError(f"{name} must be uint8 or floating point, got {arr.dtype}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    if arr.min() < 0 or arr.max() > 1:
        raise ValueError(f"{name} values must lie in [0, 1]")
    return arr.astype(dtype, copy=False)


def check_images(images, name: str = "images", dtype=np.float32) -> np.ndarray:
    """Stack a batch of equally sized images into an (N, C, H, W) array."""
    if isinstance(images, np.ndarray) and images.ndim == 4:
        if images.shape[0] == 0:
            raise ValueError(f"{name} is empty")
        return np.stack([check_image(im, f"{name}[{i}]", dtype) for i, im in enumerate(images)])
    items = list(images)
    if not items:
        raise ValueError(f"{name} is empty")
    arrs = [check_image(im, f"{name}[{i}]", dtype) for i, im in enumerate(items)]
    shapes = {a.shape for a in arrs}
    if len(shapes) != 1:
        raise ValueError(f"{name} must share one shape, got {sorted(shapes)}")
    return np.stack(arrs)


def check_binary_labels(y, name: str = "y") -> np.ndarray:
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise ValueError(f"{name} must contain only 0 and 1")
    return arr.astype(np.int64)


def check_scores_labels(scores, labels):
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.ndim != 1 or y.ndim != 1:
        raise ValueError("scores and labels must be one-dimensional")
    if s.size == 0:
        raise ValueError("empty batch")
    if s.shape != y.shape:
        raise ValueError(f"scores and labels differ in length: {s.size} vs {y.size}")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores contain non-finite values")
    return s, check_binary_labels(y, "labels")


def check_positive_int(value, name: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def check_seed(seed) -> int:
    if isinstance(seed, bool) or not isinstance(seed, numbers.Integral) or seed < 0:
        raise ValueError(f"seed must be a non-negative integer, got {seed!r}")
    return int(seed)
