"""Slow, obviously-correct reference implementations used as test oracles."""
import itertools
import math

import numpy as np


def lpd_reconstruct_bruteforce(image, size, center, statistic):
    """Per-pixel loops: gather the window by hand, apply the centre rule, reduce."""
    c_, h_, w_ = image.shape
    m = size // 2
    out = np.zeros((c_, h_, w_))
    for c in range(c_):
        for i in range(h_):
            for j in range(w_):
                vals = []
                for di in range(-m, m + 1):
                    for dj in range(-m, m + 1):
                        y, x = i + di, j + dj
                        v = float(image[c, y, x]) if 0 <= y < h_ and 0 <= x < w_ else 0.0
                        if di == 0 and dj == 0:
                            if center == "exclude":
                                continue
                            if center == "mask":
                                v = {"max": -math.inf, "min": math.inf}.get(statistic, 0.0)
                        vals.append(v)
                vals.sort()
                k = len(vals)
                if statistic == "max":
                    r = vals[-1]
                elif statistic == "min":
                    r = vals[0]
                elif statistic == "avg":
                    r = math.fsum(vals) / k
                elif k % 2:
                    r = vals[k // 2]
                else:
                    r = (vals[k // 2 - 1] + vals[k // 2]) / 2
                out[c, i, j] = r
    return out


def conv2d_direct(x, w, b=None, stride=1, padding=0, dilation=1, groups=1):
    """Seven nested loops over the textbook cross-correlation definition."""
    n_, cin, h, wd = x.shape
    cout, cin_g, kh, kw = w.shape
    ho = (h + 2 * padding - dilation * (kh - 1) - 1) // stride + 1
    wo = (wd + 2 * padding - dilation * (kw - 1) - 1) // stride + 1
    cout_g = cout // groups
    out = np.zeros((n_, cout, ho, wo))
    for n, co, yo, xo in itertools.product(range(n_), range(cout), range(ho), range(wo)):
        g = co // cout_g
        acc = 0.0 if b is None else float(b[co])
        for ci in range(cin_g):
            for i in range(kh):
                for j in range(kw):
                    y = yo * stride - padding + i * dilation
                    xx = xo * stride - padding + j * dilation
                    if 0 <= y < h and 0 <= xx < wd:
                        acc += float(w[co, ci, i, j]) * float(x[n, g * cin_g + ci, y, xx])
        out[n, co, yo, xo] = acc
    return out


def average_precision_enumeration(scores, labels):
    """Walk the ranking, recomputing precision and recall at every cut-off."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    n_pos = sum(labels)
    ap, prev_recall = 0.0, 0.0
    for k in range(1, len(order) + 1):
        top = order[:k]
        tp = sum(labels[i] for i in top)
        precision = tp / k
        recall = tp / n_pos
        ap += precision * (recall - prev_recall)
        prev_recall = recall
    return ap
