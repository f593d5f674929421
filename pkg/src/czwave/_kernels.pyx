# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot loops in ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport pow, sqrt

cnp.import_array()


def holder_sup(values, weight, steps, lengths, double delta):
    if values.ndim == 1:
        return _holder_1d(values, weight, steps, lengths, delta)
    return _holder_2d(values, weight, steps, lengths, delta)


cdef double _holder_1d(const double complex[::1] f, const double[::1] w, const long[:, ::1] steps,
                       const double[::1] lengths, double delta):
    cdef Py_ssize_t n = f.shape[0], i, j, lo, hi
    cdef long k
    cdef double best = 0.0, cur, scale, dr, di
    for j in range(steps.shape[0]):
        k = steps[j, 0]
        if k >= n or -k >= n:
            continue
        scale = 1.0 / pow(lengths[j], delta)
        lo = 0 if k >= 0 else -k
        hi = n - k if k >= 0 else n
        for i in range(lo, hi):
            dr = f[i + k].real - f[i].real
            di = f[i + k].imag - f[i].imag
            cur = w[i] * sqrt(dr * dr + di * di) * scale
            if cur > best:
                best = cur
    return best


cdef double _holder_2d(const double complex[:, ::1] f, const double[:, ::1] w, const long[:, ::1] steps,
                       const double[::1] lengths, double delta):
    cdef Py_ssize_t n0 = f.shape[0], n1 = f.shape[1], i, j, s
    cdef Py_ssize_t lo0, hi0, lo1, hi1
    cdef long a, b
    cdef double best = 0.0, cur, scale, dr, di
    for s in range(steps.shape[0]):
        a = steps[s, 0]
        b = steps[s, 1]
        if a >= n0 or -a >= n0 or b >= n1 or -b >= n1:
            continue
        scale = 1.0 / pow(lengths[s], delta)
        lo0 = 0 if a >= 0 else -a
        hi0 = n0 - a if a >= 0 else n0
        lo1 = 0 if b >= 0 else -b
        hi1 = n1 - b if b >= 0 else n1
        for i in range(lo0, hi0):
            for j in range(lo1, hi1):
                dr = f[i + a, j + b].real - f[i, j].real
                di = f[i + a, j + b].imag - f[i, j].imag
                cur = w[i, j] * sqrt(dr * dr + di * di) * scale
                if cur > best:
                    best = cur
    return best


def dyadic_block_means(a, int levels):
    cdef double[::1] x = np.ascontiguousarray(a, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0], g, b, i, size
    out = np.empty((levels + 1, n))
    cdef double[:, ::1] o = out
    cdef double acc
    for g in range(levels + 1):
        size = n >> g
        for b in range(1 << g):
            acc = 0.0
            for i in range(b * size, (b + 1) * size):
                acc += x[i]
            acc /= size
            for i in range(b * size, (b + 1) * size):
                o[g, i] = acc
    return out


def dyadic_maximal(a, int levels):
    return dyadic_block_means(a, levels).max(axis=0)


def select_maximal_cubes(mask, Py_ssize_t start, Py_ssize_t size, Py_ssize_t min_size,
                         Py_ssize_t dilation):
    cdef cnp.uint8_t[::1] m = np.ascontiguousarray(mask, dtype=np.uint8)
    cdef Py_ssize_t n = m.shape[0]
    # prefix count of excluded nodes over two periods for O(1) interval tests
    cdef cnp.int64_t[::1] bad = np.zeros(2 * n + 1, dtype=np.int64)
    cdef Py_ssize_t i, s, ln, half, a, b
    for i in range(2 * n):
        bad[i + 1] = bad[i] + (0 if m[i % n] else 1)
    out = []
    stack = [(start, size)]
    while stack:
        s, ln = stack.pop()
        half = (dilation - 1) // 2 * ln
        if ln + 2 * half >= n:
            ok = bad[n] == 0
        else:
            a = ((s - half) % n + n) % n  # C modulo keeps the sign
            b = a + ln + 2 * half
            ok = bad[b] - bad[a] == 0
        if ok:
            out.append((s, ln))
        elif ln > min_size:
            stack.append((s + ln // 2, ln // 2))
            stack.append((s, ln // 2))
    out.sort()
    return out
