"""NumPy versions of the compiled kernels.

Same signatures and semantics as ``_kernels``; work is chunked so the
broadcast temporaries stay around a few million elements.
"""

import numpy as np

_CHUNK_ELEMS = 1 << 22


def _chunks(n, per_row):
    step = max(1, _CHUNK_ELEMS // max(1, per_row))
    for start in range(0, n, step):
        yield slice(start, min(n, start + step))


def _overlap(a0, a1, b0, b1):
    return np.clip(np.minimum(a1, b1) - np.maximum(a0, b0), 0.0, None)


def step_eval(points, lo, hi, val):
    n, d = points.shape
    out = np.zeros(n)
    if n == 0 or lo.shape[0] == 0:
        return out
    for sl in _chunks(n, lo.shape[0] * d):
        p = points[sl, None, :]
        inside = np.all((p >= lo[None]) & (p < hi[None]), axis=2)
        out[sl] = inside @ val
    return out


def atoms_in_boxes(points, weights, lo, hi):
    n, d = points.shape
    q = lo.shape[0]
    out = np.zeros(q)
    if n == 0 or q == 0:
        return out
    for sl in _chunks(q, n * d):
        inside = np.all(
            (points[None] >= lo[sl, None, :]) & (points[None] < hi[sl, None, :]), axis=2
        )
        out[sl] = inside @ weights
    return out


def cells_in_boxes(clo, chi, dens, lo, hi):
    m = clo.shape[0]
    q = lo.shape[0]
    out = np.zeros(q)
    if m == 0 or q == 0:
        return out
    for sl in _chunks(q, m * clo.shape[1]):
        vol = np.prod(
            _overlap(clo[None], chi[None], lo[sl, None, :], hi[sl, None, :]), axis=2
        )
        out[sl] = vol @ dens
    return out


def kernel_overlap(points, klo, khi, kval, lo, hi, val):
    n, d = points.shape
    nk, q = klo.shape[0], lo.shape[0]
    out = np.zeros(n)
    if n == 0 or nk == 0 or q == 0:
        return out
    coef = np.outer(kval, val)
    for sl in _chunks(n, nk * q * d):
        p = points[sl, None, None, :]
        vol = np.prod(
            _overlap(p + klo[None, :, None, :], p + khi[None, :, None, :],
                     lo[None, None], hi[None, None]),
            axis=3,
        )
        out[sl] = np.einsum("ikq,kq->i", vol, coef)
    return out
