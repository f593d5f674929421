"""Reference (NumPy) implementations of the hot loops."""
from __future__ import annotations

import numpy as np


def holder_sup(values, weight, steps, lengths, delta):
    """``max weight[x] |f[x+s] - f[x]| / |s|^delta`` over nodes and steps, no wrap."""
    best = 0.0
    shape = values.shape
    for s, length in zip(steps, lengths):
        src = []
        dst = []
        ok = True
        for ax, k in enumerate(s):
            n = shape[ax]
            k = int(k)
            if abs(k) >= n:
                ok = False
                break
            if k >= 0:
                src.append(slice(0, n - k))
                dst.append(slice(k, n))
            else:
                src.append(slice(-k, n))
                dst.append(slice(0, n + k))
        if not ok:
            continue
        src, dst = tuple(src), tuple(dst)
        diff = np.abs(values[dst] - values[src]) * weight[src]
        if diff.size:
            best = max(best, float(diff.max()) / length**delta)
    return best


def dyadic_block_means(a, levels):
    """Row ``g`` holds the mean of ``a`` over the generation-``g`` dyadic block of each node."""
    n = a.shape[0]
    out = np.empty((levels + 1, n))
    for g in range(levels + 1):
        size = n >> g
        blocks = a.reshape(1 << g, size).mean(axis=1)
        out[g] = np.repeat(blocks, size)
    return out


def dyadic_maximal(a, levels):
    return dyadic_block_means(a, levels).max(axis=0)


def select_maximal_cubes(mask, start, size, min_size, dilation):
    """Maximal dyadic blocks inside ``[start, start+size)`` whose ``dilation``-fold dilate
    (periodic) lies in ``mask``; returns a list of ``(offset, length)`` in node units."""
    n = mask.shape[0]
    out = []
    stack = [(start, size)]
    while stack:
        s, ln = stack.pop()
        half = (dilation - 1) // 2 * ln
        idx = np.arange(s - half, s + ln + half) % n
        if mask[idx].all():
            out.append((s, ln))
        elif ln > min_size:
            h = ln // 2
            stack.append((s + h, h))
            stack.append((s, h))
    out.sort()
    return out
