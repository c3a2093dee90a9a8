"""Compiled per-pixel order statistics over zero-padded windows.

Each window is run through a Batcher odd-even merge sorting network
pruned to the output ranks that are needed. Median, max and min are then
exact selections. The average sums the fully sorted window in ascending
order, so it depends only on the multiset of window values and flips or
rotations of the image give bit-identical results. The network is applied
to whole image rows at once so the inner loop over columns is branch-free
and unit-stride.
"""
from functools import lru_cache

import numba
import numpy as np


def batcher_network(m: int) -> list:
    """Comparators (a, b), a < b, of an odd-even merge sort on m inputs."""
    pairs = []
    p = 1
    while p < m:
        k = p
        while k >= 1:
            for j in range(k % p, m - k, 2 * k):
                for i in range(min(k, m - j - k)):
                    if (i + j) // (2 * p) == (i + j + k) // (2 * p):
                        pairs.append((i + j, i + j + k))
            k //= 2
        p *= 2
    return pairs


def prune_network(pairs: list, outputs) -> list:
    """Drop comparators that cannot influence the wires in `outputs`."""
    needed = set(outputs)
    kept = []
    for a, b in reversed(pairs):
        if a in needed or b in needed:
            kept.append((a, b))
            needed.update((a, b))
    return kept[::-1]


@lru_cache(maxsize=None)
def selection_network(m: int, ranks: tuple) -> np.ndarray:
    pairs = prune_network(batcher_network(m), ranks)
    return np.array(pairs, dtype=np.int64).reshape(-1, 2)


@numba.njit(cache=True)
def network_rows(xp, taps, comps, lo, hi, divisor, out):
    """out[c, y, x] = mean of ranks lo and hi of the tapped window values.

    With lo < 0 the output is instead the ascending sum of all ranks over
    `divisor`. taps[k] = (di, dj) offsets into the padded image, or
    (-1, -1) for a constant zero tap.
    """
    c_, h, w = out.shape
    m = taps.shape[0]
    buf = np.empty((m, w), dtype=xp.dtype)
    for c in range(c_):
        for y in range(h):
            for k in range(m):
                di, dj = taps[k, 0], taps[k, 1]
                bk = buf[k]
                if di < 0:
                    bk[:] = 0
                else:
                    row = xp[c, y + di]
                    for x in range(w):
                        bk[x] = row[x + dj]
            for q in range(comps.shape[0]):
                ra = buf[comps[q, 0]]
                rb = buf[comps[q, 1]]
                for x in range(w):
                    u = ra[x]
                    v = rb[x]
                    ra[x] = min(u, v)
                    rb[x] = max(u, v)
            orow = out[c, y]
            if lo < 0:
                for x in range(w):
                    acc = 0.0
                    for k in range(m):
                        acc += buf[k, x]
                    orow[x] = acc / divisor
            elif lo == hi:
                orow[:] = buf[lo]
            else:
                blo = buf[lo]
                bhi = buf[hi]
                for x in range(w):
                    orow[x] = (blo[x] + bhi[x]) / 2
