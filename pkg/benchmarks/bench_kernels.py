"""Time the compiled kernels against the NumPy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Each kernel runs on the same random inputs under both backends; the table
reports the best-of-``repeat`` wall time and the speedup.  The end-to-end
row times a batch of shot-noise integrals in a fresh interpreter per
backend, since the backend is chosen once at import.
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from splitfield import _kernels_py

try:
    from splitfield import _kernels
except ImportError:
    _kernels = None


def _boxes(gen, n, d, width):
    lo = gen.uniform(-10.0, 10.0, (n, d))
    return lo, lo + gen.uniform(0.1, width, (n, d))


def kernel_cases(seed=0):
    gen = np.random.default_rng(seed)
    cases = {}
    for d in (1, 2):
        pts = gen.uniform(-10.0, 10.0, (50_000, d))
        lo, hi = _boxes(gen, 64, d, 3.0)
        val = gen.normal(size=64)
        cases[f"step_eval d={d}"] = ("step_eval", (pts, lo, hi, val))
        w = gen.normal(size=len(pts))
        blo, bhi = _boxes(gen, 256, d, 5.0)
        cases[f"atoms_in_boxes d={d}"] = ("atoms_in_boxes", (pts, w, blo, bhi))
        clo, chi = _boxes(gen, 2000, d, 1.0)
        dens = gen.normal(size=2000)
        cases[f"cells_in_boxes d={d}"] = ("cells_in_boxes", (clo, chi, dens, blo, bhi))
        klo, khi = _boxes(gen, 4, d, 1.0)
        kval = gen.normal(size=4)
        cases[f"kernel_overlap d={d}"] = ("kernel_overlap",
                                          (pts[:20_000], klo, khi, kval, lo, hi, val))
    return cases


def best_time(fn, args, repeat):
    fn(*args)
    return min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))


END_TO_END = (
    "import time; from splitfield.fields import ShotNoise; "
    "from splitfield.measure import Box, TestFunction; "
    "from splitfield.fields import sample_integrals; "
    "phi = TestFunction.indicator(Box([0.0, 0.0], [1.0, 1.0])); "
    "sample_integrals(ShotNoise(dim=2), phi, 8.0, 1000, 0); "
    "t = time.perf_counter(); sample_integrals(ShotNoise(dim=2), phi, 32.0, 20000, 1); "
    "print(time.perf_counter() - t)"
)


def end_to_end(pure: bool) -> float:
    env = dict(os.environ)
    env.pop("SPLITFIELD_PURE_PYTHON", None)
    if pure:
        env["SPLITFIELD_PURE_PYTHON"] = "1"
    out = subprocess.run([sys.executable, "-c", END_TO_END], env=env, check=True,
                         capture_output=True, text=True)
    return float(out.stdout.strip())


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="also write the results to this file")
    args = ap.parse_args(argv)
    if _kernels is None:
        print("compiled extension not built; nothing to compare", file=sys.stderr)
        return 1
    rows = []
    for name, (fn_name, fargs) in kernel_cases().items():
        t_py = best_time(getattr(_kernels_py, fn_name), fargs, args.repeat)
        t_cy = best_time(getattr(_kernels, fn_name), fargs, args.repeat)
        np.testing.assert_allclose(getattr(_kernels, fn_name)(*fargs),
                                   getattr(_kernels_py, fn_name)(*fargs), rtol=1e-10, atol=1e-9)
        rows.append({"case": name, "python_s": t_py, "cython_s": t_cy, "speedup": t_py / t_cy})
    t_py, t_cy = end_to_end(True), end_to_end(False)
    rows.append({"case": "shot-noise integrals d=2 (end to end)", "python_s": t_py,
                 "cython_s": t_cy, "speedup": t_py / t_cy})
    width = max(len(r["case"]) for r in rows)
    print(f"{'case':<{width}}  {'python [s]':>11}  {'cython [s]':>11}  {'speedup':>8}")
    for r in rows:
        print(f"{r['case']:<{width}}  {r['python_s']:11.5f}  {r['cython_s']:11.5f}  "
              f"{r['speedup']:7.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
