import os
import subprocess
import sys

import numpy as np
import pytest

from splitfield import _kernels_py, kernels

compiled = pytest.importorskip("splitfield._kernels")


def _boxes(gen, n, d, scale=4.0):
    lo = gen.uniform(-scale, scale, (n, d))
    return lo, lo + gen.uniform(0.1, 2.0, (n, d))


@pytest.mark.parametrize("d", [1, 2, 3])
def test_backends_agree(gen, d):
    pts = gen.uniform(-5, 5, (300, d))
    w = gen.normal(size=300)
    lo, hi = _boxes(gen, 40, d)
    val = gen.normal(size=40)
    qlo, qhi = _boxes(gen, 25, d)
    klo = np.zeros((2, d))
    khi = np.full((2, d), 0.5)
    khi[1] = 1.0
    klo[1] = 0.5
    kval = np.array([1.0, -0.5])
    pairs = [
        (compiled.step_eval(pts, lo, hi, val), _kernels_py.step_eval(pts, lo, hi, val)),
        (compiled.atoms_in_boxes(pts, w, qlo, qhi), _kernels_py.atoms_in_boxes(pts, w, qlo, qhi)),
        (compiled.cells_in_boxes(lo, hi, val, qlo, qhi),
         _kernels_py.cells_in_boxes(lo, hi, val, qlo, qhi)),
        (compiled.kernel_overlap(pts, klo, khi, kval, lo, hi, val),
         _kernels_py.kernel_overlap(pts, klo, khi, kval, lo, hi, val)),
    ]
    for a, b in pairs:
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


def test_empty_inputs():
    z = np.zeros((0, 2))
    for mod in (compiled, _kernels_py):
        assert mod.step_eval(z, z, z, np.zeros(0)).shape == (0,)
        assert np.all(mod.atoms_in_boxes(z, np.zeros(0), np.zeros((3, 2)), np.ones((3, 2))) == 0)


def test_half_open_boundaries():
    lo = np.array([[0.0]])
    hi = np.array([[1.0]])
    pts = np.array([[0.0], [1.0], [0.5]])
    for mod in (compiled, _kernels_py):
        np.testing.assert_array_equal(mod.step_eval(pts, lo, hi, np.array([2.0])), [2.0, 0.0, 2.0])


def test_wrapper_accepts_noncontiguous(gen):
    pts = gen.uniform(0, 1, (50, 4))[:, ::2]
    lo = np.zeros((1, 2))
    hi = np.ones((1, 2))
    assert np.all(kernels.step_eval(pts, lo, hi, np.array([1.0])) == 1.0)


def test_backend_selected():
    # the extension is importable here, so only the switch can select the fallback
    forced = os.environ.get("SPLITFIELD_PURE_PYTHON") == "1"
    assert kernels.BACKEND == ("python" if forced else "cython")


def test_pure_python_switch():
    code = ("import splitfield.kernels as k, numpy as np;"
            "print(k.BACKEND, k.cells_in_boxes(np.zeros((1,1)), np.ones((1,1)), np.ones(1),"
            " np.zeros((1,1)), np.full((1,1), .5))[0])")
    env = dict(os.environ, SPLITFIELD_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True).stdout.split()
    assert out == ["python", "0.5"]
