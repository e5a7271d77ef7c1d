# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled loops for step-function and box-overlap sums.

Every function accumulates in plain index order so results do not depend
on threading or vector width.
"""

import numpy as np


cdef inline double _overlap(double a0, double a1, double b0, double b1) noexcept nogil:
    cdef double lo = a0 if a0 > b0 else b0
    cdef double hi = a1 if a1 < b1 else b1
    return hi - lo if hi > lo else 0.0


def step_eval(const double[:, ::1] points, const double[:, ::1] lo,
              const double[:, ::1] hi, const double[::1] val):
    cdef Py_ssize_t n = points.shape[0], k = lo.shape[0], d = points.shape[1]
    cdef Py_ssize_t i, j, a
    cdef double acc, x
    cdef bint inside
    out = np.zeros(n)
    cdef double[::1] o = out
    with nogil:
        for i in range(n):
            acc = 0.0
            for j in range(k):
                inside = True
                for a in range(d):
                    x = points[i, a]
                    inside = inside & (x >= lo[j, a]) & (x < hi[j, a])
                acc = acc + val[j] * inside
            o[i] = acc
    return out


def atoms_in_boxes(const double[:, ::1] points, const double[::1] weights,
                   const double[:, ::1] lo, const double[:, ::1] hi):
    cdef Py_ssize_t n = points.shape[0], q = lo.shape[0], d = points.shape[1]
    cdef Py_ssize_t i, j, a
    cdef double acc, x, l, h, s0, s1, s2, s3
    cdef bint inside
    out = np.zeros(q)
    cdef double[::1] o = out
    with nogil:
        for j in range(q):
            acc = 0.0
            if d == 1:
                # four interleaved partial sums break the add dependency chain;
                # weights are finite, so multiplying by the 0/1 mask is exact
                l = lo[j, 0]
                h = hi[j, 0]
                s0 = s1 = s2 = s3 = 0.0
                i = 0
                while i + 4 <= n:
                    x = points[i, 0]
                    s0 = s0 + weights[i] * ((x >= l) & (x < h))
                    x = points[i + 1, 0]
                    s1 = s1 + weights[i + 1] * ((x >= l) & (x < h))
                    x = points[i + 2, 0]
                    s2 = s2 + weights[i + 2] * ((x >= l) & (x < h))
                    x = points[i + 3, 0]
                    s3 = s3 + weights[i + 3] * ((x >= l) & (x < h))
                    i = i + 4
                while i < n:
                    x = points[i, 0]
                    s0 = s0 + weights[i] * ((x >= l) & (x < h))
                    i = i + 1
                acc = (s0 + s1) + (s2 + s3)
            else:
                for i in range(n):
                    inside = True
                    for a in range(d):
                        x = points[i, a]
                        inside = inside & (x >= lo[j, a]) & (x < hi[j, a])
                    acc = acc + weights[i] * inside
            o[j] = acc
    return out


def cells_in_boxes(const double[:, ::1] clo, const double[:, ::1] chi,
                   const double[::1] dens, const double[:, ::1] lo,
                   const double[:, ::1] hi):
    cdef Py_ssize_t m = clo.shape[0], q = lo.shape[0], d = clo.shape[1]
    cdef Py_ssize_t i, j, a
    cdef double acc, v
    out = np.zeros(q)
    cdef double[::1] o = out
    with nogil:
        for j in range(q):
            acc = 0.0
            for i in range(m):
                v = dens[i]
                for a in range(d):
                    v = v * _overlap(clo[i, a], chi[i, a], lo[j, a], hi[j, a])
                    if v == 0.0:
                        break
                acc = acc + v
            o[j] = acc
    return out


def kernel_overlap(const double[:, ::1] points, const double[:, ::1] klo,
                   const double[:, ::1] khi, const double[::1] kval,
                   const double[:, ::1] lo, const double[:, ::1] hi,
                   const double[::1] val):
    """Per point p: sum over kernel pieces k and boxes q of
    kval[k] * val[q] * vol((p + kbox[k]) & box[q])."""
    cdef Py_ssize_t n = points.shape[0], nk = klo.shape[0], q = lo.shape[0]
    cdef Py_ssize_t d = points.shape[1]
    cdef Py_ssize_t i, k, j, a
    cdef double acc, v, x
    out = np.zeros(n)
    cdef double[::1] o = out
    with nogil:
        for i in range(n):
            acc = 0.0
            for k in range(nk):
                for j in range(q):
                    v = kval[k] * val[j]
                    for a in range(d):
                        x = points[i, a]
                        v = v * _overlap(x + klo[k, a], x + khi[k, a], lo[j, a], hi[j, a])
                        if v == 0.0:
                            break
                    acc = acc + v
            o[i] = acc
    return out
