# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops for patch extraction, scatter-add and max pooling.

Loop orders mirror ``_npkernels`` so both backends sum in the same sequence.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def im2col(const float[:, :, :, ::1] x, Py_ssize_t m, Py_ssize_t s):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t bh = (h - m) // s + 1, bw = (w - m) // s + 1
    out = np.empty((n, c * m * m, bh * bw), dtype=np.float32)
    cdef float[:, :, ::1] o = out
    cdef Py_ssize_t i, ch, ki, kj, oy, ox, row
    with nogil:
        for i in range(n):
            for ch in range(c):
                for ki in range(m):
                    for kj in range(m):
                        row = (ch * m + ki) * m + kj
                        for oy in range(bh):
                            for ox in range(bw):
                                o[i, row, oy * bw + ox] = x[i, ch, oy * s + ki, ox * s + kj]
    return out


def col2im(const float[:, :, ::1] cols, Py_ssize_t c, Py_ssize_t h, Py_ssize_t w,
           Py_ssize_t m, Py_ssize_t s):
    cdef Py_ssize_t n = cols.shape[0]
    cdef Py_ssize_t bh = (h - m) // s + 1, bw = (w - m) // s + 1
    out = np.zeros((n, c, h, w), dtype=np.float32)
    cdef float[:, :, :, ::1] o = out
    cdef Py_ssize_t i, ch, ki, kj, oy, ox, row
    with nogil:
        for i in range(n):
            for ch in range(c):
                for ki in range(m):
                    for kj in range(m):
                        row = (ch * m + ki) * m + kj
                        for oy in range(bh):
                            for ox in range(bw):
                                o[i, ch, oy * s + ki, ox * s + kj] += cols[i, row, oy * bw + ox]
    return out


def maxpool(const float[:, :, :, ::1] x, Py_ssize_t m, Py_ssize_t s):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t bh = (h - m) // s + 1, bw = (w - m) // s + 1
    out = np.empty((n, c, bh, bw), dtype=np.float32)
    sw = np.empty((n, c, bh, bw), dtype=np.int64)
    cdef float[:, :, :, ::1] o = out
    cdef cnp.int64_t[:, :, :, ::1] so = sw
    cdef Py_ssize_t i, ch, oy, ox, ki, kj, best_idx, y, xx
    cdef float best, v
    with nogil:
        for i in range(n):
            for ch in range(c):
                for oy in range(bh):
                    for ox in range(bw):
                        y = oy * s
                        xx = ox * s
                        best = x[i, ch, y, xx]
                        best_idx = y * w + xx
                        for ki in range(m):
                            for kj in range(m):
                                v = x[i, ch, y + ki, xx + kj]
                                if v > best:
                                    best = v
                                    best_idx = (y + ki) * w + xx + kj
                        o[i, ch, oy, ox] = best
                        so[i, ch, oy, ox] = best_idx
    return out, sw


def unpool(const float[:, :, :, ::1] g, const cnp.int64_t[:, :, :, ::1] sw,
           Py_ssize_t h, Py_ssize_t w):
    cdef Py_ssize_t n = g.shape[0], c = g.shape[1], bh = g.shape[2], bw = g.shape[3]
    out = np.zeros((n, c, h * w), dtype=np.float32)
    cdef float[:, :, ::1] o = out
    cdef Py_ssize_t i, ch, oy, ox
    with nogil:
        for i in range(n):
            for ch in range(c):
                for oy in range(bh):
                    for ox in range(bw):
                        o[i, ch, sw[i, ch, oy, ox]] += g[i, ch, oy, ox]
    return out.reshape(n, c, h, w)
