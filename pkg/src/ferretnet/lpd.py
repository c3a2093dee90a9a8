"""Local pixel dependency (LPD) maps.

Every pixel is predicted from an n x n window of its zero-padded
neighbourhood; the LPD map is the residual between the image and that
prediction. The default configuration (3x3 window, zero-masked centre,
median) is the detector's input representation; the other centre
strategies and statistics exist for ablations.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import _lpd_kernels

__all__ = [
    "CenterStrategy",
    "Statistic",
    "NeighborhoodSpec",
    "zero_pad",
    "reconstruct",
    "lpd_map",
    "lpd_to_uint8",
]


class CenterStrategy(str, enum.Enum):
    MASK = "mask"
    EXCLUDE = "exclude"
    RETAIN = "retain"


class Statistic(str, enum.Enum):
    MEDIAN = "median"
    MAX = "max"
    MIN = "min"
    AVG = "avg"


@dataclass(frozen=True)
class NeighborhoodSpec:
    """Window size, centre-pixel handling and reduction used by `reconstruct`."""

    size: int = 3
    center: CenterStrategy = CenterStrategy.MASK
    statistic: Statistic = Statistic.MEDIAN

    def __post_init__(self):
        if isinstance(self.size, bool) or int(self.size) != self.size:
            raise ValueError(f"neighbourhood size must be an integer, got {self.size!r}")
        if self.size < 3 or self.size % 2 == 0:
            raise ValueError(f"neighbourhood size must be odd and >= 3, got {self.size}")
        object.__setattr__(self, "size", int(self.size))
        object.__setattr__(self, "center", CenterStrategy(self.center))
        object.__setattr__(self, "statistic", Statistic(self.statistic))

    @property
    def radius(self) -> int:
        return self.size // 2

    def to_dict(self) -> dict:
        return {"size": self.size, "center": self.center.value, "statistic": self.statistic.value}

    @classmethod
    def from_dict(cls, d: dict) -> "NeighborhoodSpec":
        return cls(size=d["size"], center=d["center"], statistic=d["statistic"])


def _as_image(image) -> np.ndarray:
    arr = np.asarray(image)
    if arr.ndim not in (3, 4):
        raise ValueError(f"expected (C, H, W) or (N, C, H, W) array, got shape {arr.shape}")
    if min(arr.shape) < 1:
        raise ValueError(f"image has an empty dimension: {arr.shape}")
    if not np.issubdtype(arr.dtype, np.floating):
        arr = arr.astype(np.float64)
    return arr


def zero_pad(image, p: int) -> np.ndarray:
    """Pad the two trailing (spatial) axes with a ring of zeros of width `p`."""
    if p < 0:
        raise ValueError(f"padding must be non-negative, got {p}")
    arr = np.asarray(image)
    if p == 0:
        return arr.copy()
    widths = [(0, 0)] * (arr.ndim - 2) + [(p, p), (p, p)]
    return np.pad(arr, widths, mode="constant", constant_values=0)


def _windows(image: np.ndarray, spec: NeighborhoodSpec) -> np.ndarray:
    """Return a writable (..., H, W, n*n) copy of every pixel's window."""
    n = spec.size
    padded = zero_pad(image, spec.radius)
    win = sliding_window_view(padded, (n, n), axis=(-2, -1))
    out = win.reshape(*win.shape[:-2], n * n)
    # reshape returns a read-only view when no copy is needed; the centre rules write into it
    return out if out.flags.writeable else out.copy()


@lru_cache(maxsize=None)
def _network_plan(spec: NeighborhoodSpec):
    """Window taps and the pruned sorting network for an order statistic."""
    n = spec.size
    mid = n * n // 2
    taps = []
    for k in range(n * n):
        if k == mid and spec.center is not CenterStrategy.RETAIN:
            if spec.center is CenterStrategy.EXCLUDE or spec.statistic in (Statistic.MAX, Statistic.MIN):
                continue  # a masked centre can never be the max or the min
            taps.append((-1, -1))
        else:
            taps.append(divmod(k, n))
    m = len(taps)
    # a masked centre still counts in the average's divisor
    divisor = float(n * n if spec.center is CenterStrategy.MASK else m)
    if spec.statistic is Statistic.AVG:
        return np.array(taps, dtype=np.int64), _lpd_kernels.selection_network(m, tuple(range(m))), -1, -1, divisor
    if spec.statistic is Statistic.MAX:
        lo = hi = m - 1
    elif spec.statistic is Statistic.MIN:
        lo = hi = 0
    else:
        lo, hi = (m // 2, m // 2) if m % 2 else (m // 2 - 1, m // 2)
    comps = _lpd_kernels.selection_network(m, tuple(sorted({lo, hi})))
    return np.array(taps, dtype=np.int64), comps, lo, hi, divisor


def _reconstruct_single(image: np.ndarray, spec: NeighborhoodSpec) -> np.ndarray:
    if image.dtype not in (np.float32, np.float64):
        return _reconstruct_vectorised(image, spec)
    taps, comps, lo, hi, divisor = _network_plan(spec)
    padded = np.ascontiguousarray(zero_pad(image, spec.radius))
    out = np.empty(image.shape, dtype=image.dtype)
    _lpd_kernels.network_rows(padded, taps, comps, lo, hi, divisor, out)
    return out


def _reconstruct_vectorised(image: np.ndarray, spec: NeighborhoodSpec) -> np.ndarray:
    n2 = spec.size * spec.size
    mid = n2 // 2
    win = _windows(image, spec)
    center, stat = spec.center, spec.statistic

    if center is CenterStrategy.EXCLUDE:
        win = np.delete(win, mid, axis=-1)
    elif center is CenterStrategy.MASK:
        # the masked centre must never be picked by max/min
        if stat is Statistic.MAX:
            win[..., mid] = -np.inf
        elif stat is Statistic.MIN:
            win[..., mid] = np.inf
        else:
            win[..., mid] = 0

    count = win.shape[-1]
    if stat is Statistic.MAX:
        return win.max(axis=-1)
    if stat is Statistic.MIN:
        return win.min(axis=-1)
    if stat is Statistic.AVG:
        return win.sum(axis=-1) / count
    if count % 2:
        k = count // 2
        return np.partition(win, k, axis=-1)[..., k]
    k = count // 2
    part = np.partition(win, (k - 1, k), axis=-1)
    return (part[..., k - 1] + part[..., k]) / 2


def reconstruct(image, spec: NeighborhoodSpec | None = None) -> np.ndarray:
    """Neighbourhood reconstruction of `image`, same shape and dtype.

    Accepts a single (C, H, W) image or an (N, C, H, W) batch; channels and
    batch members are processed independently.
    """
    spec = spec or NeighborhoodSpec()
    arr = _as_image(image)
    if arr.ndim == 3:
        return _reconstruct_single(arr, spec).astype(arr.dtype, copy=False)
    # per-sample loop keeps the window buffer at one image's worth
    out = np.empty_like(arr)
    for i in range(arr.shape[0]):
        out[i] = _reconstruct_single(arr[i], spec)
    return out


def lpd_map(image, spec: NeighborhoodSpec | None = None) -> np.ndarray:
    """Residual ``image - reconstruct(image, spec)``."""
    arr = _as_image(image)
    return arr - reconstruct(arr, spec)


def lpd_to_uint8(lpd) -> np.ndarray:
    """Map LPD values in [-1, 1] to [0, 255] with round-half-up."""
    lpd = np.clip(np.asarray(lpd, dtype=np.float64), -1.0, 1.0)
    return np.floor((lpd + 1.0) * 127.5 + 0.5).astype(np.uint8)
