"""Kernel dispatch: the compiled extension when it imports, NumPy otherwise.

``BACKEND`` names the implementation in use.  Setting
``SPLITFIELD_PURE_PYTHON=1`` before import forces the NumPy path, which is
how the test suite exercises the fallback on machines with the extension.
"""

import os

import numpy as np

from . import _kernels_py

if os.environ.get("SPLITFIELD_PURE_PYTHON") == "1":
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"


def _f2(a, d):
    a = np.ascontiguousarray(a, dtype=np.float64)
    return a.reshape(-1, d)


def _f1(a):
    return np.ascontiguousarray(a, dtype=np.float64).reshape(-1)


def step_eval(points, lo, hi, val):
    """Value of the step function sum_j val[j] 1[lo[j] <= x < hi[j]] at each point."""
    d = lo.shape[1]
    return _impl.step_eval(_f2(points, d), _f2(lo, d), _f2(hi, d), _f1(val))


def atoms_in_boxes(points, weights, lo, hi):
    """Total atom weight inside each box."""
    d = lo.shape[1]
    return _impl.atoms_in_boxes(_f2(points, d), _f1(weights), _f2(lo, d), _f2(hi, d))


def cells_in_boxes(clo, chi, dens, lo, hi):
    """Integral of the piecewise-constant density over each box."""
    d = lo.shape[1]
    return _impl.cells_in_boxes(_f2(clo, d), _f2(chi, d), _f1(dens), _f2(lo, d), _f2(hi, d))


def kernel_overlap(points, klo, khi, kval, lo, hi, val):
    """For each point p, the integral of the step function (lo, hi, val)
    against the kernel translated to p."""
    d = lo.shape[1]
    return _impl.kernel_overlap(
        _f2(points, d), _f2(klo, d), _f2(khi, d), _f1(kval), _f2(lo, d), _f2(hi, d), _f1(val)
    )
