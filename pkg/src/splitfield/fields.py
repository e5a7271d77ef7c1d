"""Stationary splittable field models with constructive splits.

Three models are provided:

* :class:`CenteredPoisson`: atoms of mass ``m`` at Poisson points, minus the
  constant compensator density.
* :class:`ShotNoise`: each Poisson point ``p`` spreads a step kernel
  ``h(t - p)`` supported in ``[0, w)^d``, again compensated.
* :class:`BlockIID`: independent Rademacher densities on the unit lattice
  cells.  This field is stationary under integer shifts only.

A split is built from two independent noise streams.  ``x0`` uses the
primary stream everywhere, ``xminus`` the primary stream below the
hyperplane and the secondary one above, ``xplus`` the reverse.  The leak is
therefore exactly zero for Poisson atoms, lives within the kernel width of
the hyperplane for shot noise, and lives in the cut lattice cells for
``BlockIID``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import stats

from . import kernels
from . import rng as rngmod
from .errors import ArgumentError, UnsupportedError
from .measure import (
    Box,
    SampleMeasure,
    TestFunction,
    box_difference,
    integrate_box,
    integrate_boxes,
    marginalize,
    variation_box,
)

LN2 = math.log(2.0)


def exm1mx(x):
    """``exp(x) - 1 - x`` without cancellation near 0."""
    x = np.asarray(x, dtype=float)
    out = np.expm1(x) - x
    small = np.abs(x) < 1e-3
    if np.any(small):
        xs = x[small]
        out[small] = xs * xs * (0.5 + xs * (1.0 / 6 + xs * (1.0 / 24 + xs * (1.0 / 120 + xs / 720))))
    return out


def logcosh(x):
    """``log cosh x``; ``cosh x - 1 = 2 sinh^2(x/2)`` avoids cancellation near 0."""
    x = np.abs(np.asarray(x, dtype=float))
    with np.errstate(over="ignore"):
        near = np.log1p(2.0 * np.sinh(0.5 * x) ** 2)
    return np.where(x < 1.0, near, x + np.log1p(np.exp(-2.0 * x)) - LN2)


def _bisect_increasing(fn, target, lo, hi, tol=1e-15, iters=200):
    """Root of an increasing ``fn(x) = target`` by plain bisection."""
    while fn(hi) < target:
        hi *= 2.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if fn(mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * hi:
            break
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class FieldModel:
    """Common interface; concrete models override the noise hooks."""

    dim: int = 1

    name = "abstract"
    has_exact_cgf = True

    def __post_init__(self):
        if int(self.dim) < 1:
            raise ArgumentError("dimension must be positive")
        object.__setattr__(self, "dim", int(self.dim))

    # hooks ------------------------------------------------------------
    @property
    def reach(self) -> float:
        """How far below a window the driving noise must be drawn."""
        return 0.0

    @property
    def sigma_sq(self) -> float:
        raise NotImplementedError

    def unit_cube_log_mgf(self, s: float) -> float:
        """log E exp(s * variation over the unit cube), or an upper bound."""
        raise UnsupportedError(f"{self.name} has no certified variation law")

    def _draw_noise(self, gen, region: Box):
        raise NotImplementedError

    def _realize(self, anchors, values, window: Box) -> SampleMeasure:
        raise NotImplementedError

    def params(self) -> dict:
        raise NotImplementedError

    # derived ----------------------------------------------------------
    @cached_property
    def C_split(self) -> float:
        return splittable_constant(self)

    def noise_region(self, window: Box) -> Box:
        return Box(window.lo - self.reach, window.hi)

    def describe(self) -> dict:
        return {"name": self.name, "dim": self.dim, "params": self.params()}


@dataclass(frozen=True)
class CenteredPoisson(FieldModel):
    intensity: float = 1.0
    mass: float = 1.0

    name = "poisson"

    def __post_init__(self):
        super().__post_init__()
        if not self.intensity > 0:
            raise ArgumentError("intensity must be positive")
        self.C_split

    @property
    def sigma_sq(self) -> float:
        return self.mass ** 2 * self.intensity

    def unit_cube_log_mgf(self, s):
        # variation = |m| (N + mu) with N ~ Poisson(mu)
        a = abs(self.mass)
        return s * a * self.intensity + self.intensity * math.expm1(s * a)

    def _draw_noise(self, gen, region):
        n = gen.poisson(self.intensity * region.volume)
        pts = region.lo + gen.random((n, self.dim)) * (region.hi - region.lo)
        return pts, np.ones(n)

    def _realize(self, anchors, values, window):
        return SampleMeasure.build(
            self.dim, window, anchors, np.full(len(anchors), float(self.mass)),
            window.lo[None], window.hi[None], [-self.mass * self.intensity],
        )

    def params(self):
        return {"intensity": self.intensity, "mass": self.mass}


@dataclass(frozen=True)
class ShotNoise(FieldModel):
    """Compensated Poisson shot noise with a nonnegative-support step kernel."""

    intensity: float = 1.0
    mass: float = 1.0
    kernel: TestFunction | None = None

    name = "shot_noise"

    def __post_init__(self):
        super().__post_init__()
        if not self.intensity > 0:
            raise ArgumentError("intensity must be positive")
        if self.kernel is None:
            object.__setattr__(self, "kernel", TestFunction.indicator(Box([0.0] * self.dim,
                                                                          [1.0] * self.dim)))
        if self.kernel.dim != self.dim:
            raise ArgumentError("kernel dimension differs from model dimension")
        if np.any(self.kernel.lo < 0):
            raise ArgumentError("kernel support must lie in the nonnegative orthant")
        self.C_split

    @property
    def width(self) -> float:
        return float(self.kernel.hi.max())

    @property
    def reach(self):
        return self.width

    @property
    def kernel_integral(self) -> float:
        return float(self.kernel.values @ self.kernel.volumes)

    @property
    def sigma_sq(self):
        return self.mass ** 2 * self.intensity * self.kernel_integral ** 2

    def unit_cube_log_mgf(self, s):
        # Upper bound: variation <= |m| sum_p H(p) + |m| mu |int h| with
        # H(p) = int_{[0,1)^d} |h(t - p)| dt; the point sum is compound Poisson.
        weights, jumps = self._unit_levy
        a = abs(self.mass)
        return s * a * self.intensity * abs(self.kernel_integral) + float(
            weights @ np.expm1(s * a * jumps))

    @cached_property
    def _unit_levy(self):
        unit = TestFunction.indicator(Box([0.0] * self.dim, [1.0] * self.dim))
        return _overlap_levy(self.intensity, np.abs(self.kernel.values), self.kernel, unit, 1.0)

    def _draw_noise(self, gen, region):
        n = gen.poisson(self.intensity * region.volume)
        pts = region.lo + gen.random((n, self.dim)) * (region.hi - region.lo)
        return pts, np.ones(n)

    def _realize(self, anchors, values, window):
        k = self.kernel
        lo = (anchors[:, None, :] + k.lo[None]).reshape(-1, self.dim)
        hi = (anchors[:, None, :] + k.hi[None]).reshape(-1, self.dim)
        dens = np.tile(self.mass * k.values, len(anchors))
        lo = np.maximum(lo, window.lo)
        hi = np.minimum(hi, window.hi)
        keep = np.all(hi > lo, axis=1)
        lo = np.vstack([lo[keep], window.lo[None]])
        hi = np.vstack([hi[keep], window.hi[None]])
        dens = np.append(dens[keep], -self.mass * self.intensity * self.kernel_integral)
        return SampleMeasure.build(self.dim, window, cell_lo=lo, cell_hi=hi, densities=dens,
                                   check=False)

    def params(self):
        return {"intensity": self.intensity, "mass": self.mass, "kernel": self.kernel.to_dict()}


@dataclass(frozen=True)
class BlockIID(FieldModel):
    """Independent densities +-amplitude on the cells of the integer lattice."""

    amplitude: float = 1.0

    name = "block_iid"

    def __post_init__(self):
        super().__post_init__()
        if self.amplitude == 0:
            raise ArgumentError("amplitude must be nonzero")
        self.C_split

    @property
    def sigma_sq(self):
        return self.amplitude ** 2

    def unit_cube_log_mgf(self, s):
        # the unit cube is a lattice cell, so the variation is |a| surely
        return s * abs(self.amplitude)

    def _draw_noise(self, gen, region):
        start = np.floor(region.lo).astype(np.int64)
        stop = np.ceil(region.hi).astype(np.int64)
        axes = [np.arange(a, b, dtype=float) for a, b in zip(start, stop)]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.dim)
        signs = gen.integers(0, 2, size=len(grid)) * 2.0 - 1.0
        return grid, signs

    def _realize(self, anchors, values, window):
        lo = np.maximum(anchors, window.lo)
        hi = np.minimum(anchors + 1.0, window.hi)
        keep = np.all(hi > lo, axis=1)
        return SampleMeasure.build(self.dim, window, cell_lo=lo[keep], cell_hi=hi[keep],
                                   densities=self.amplitude * values[keep], check=False)

    def params(self):
        return {"amplitude": self.amplitude}


def _overlap_levy(intensity, kvals, kernel, phi, r, nodes=8, region=None):
    """Compound-Poisson description of ``sum_p G(p)`` over points ``p`` in
    ``region`` (everywhere when None), with
    ``G(p) = int phi(t / r) k(t - p) dt``: weights (intensity x volume) and jump
    sizes ``G`` at tensor Gauss-Legendre nodes.

    ``G`` is multilinear between the breakpoints ``phi_edges - kernel_edges``,
    so a per-cell Gauss rule integrates smooth functions of it accurately.
    """
    d = phi.dim
    plo, phi_hi = phi.scaled_corners(r)
    klo, khi = kernel.lo, kernel.hi
    axes_nodes = []
    axes_weights = []
    gx, gw = np.polynomial.legendre.leggauss(nodes)
    for a in range(d):
        edges = np.unique(np.concatenate([
            (plo[:, a][:, None] - khi[:, a][None]).ravel(),
            (plo[:, a][:, None] - klo[:, a][None]).ravel(),
            (phi_hi[:, a][:, None] - khi[:, a][None]).ravel(),
            (phi_hi[:, a][:, None] - klo[:, a][None]).ravel(),
        ]))
        if region is not None:
            rlo, rhi = region.lower[a], region.upper[a]
            extra = [x for x in (rlo, rhi) if np.isfinite(x)]
            edges = np.unique(np.concatenate([edges, extra]))
            centre = 0.5 * (edges[1:] + edges[:-1])
            inside = (centre >= rlo) & (centre < rhi)
        else:
            inside = np.ones(len(edges) - 1, bool)
        mid = (0.5 * (edges[1:] + edges[:-1]))[inside]
        half = (0.5 * np.diff(edges))[inside]
        axes_nodes.append((mid[:, None] + half[:, None] * gx[None]).ravel())
        axes_weights.append((half[:, None] * gw[None]).ravel())
    mesh = np.meshgrid(*axes_nodes, indexing="ij")
    pts = np.stack([x.ravel() for x in mesh], axis=1)
    wmesh = np.meshgrid(*axes_weights, indexing="ij")
    w = np.prod(np.stack([x.ravel() for x in wmesh], axis=1), axis=1)
    g = kernels.kernel_overlap(pts, klo, khi, kvals, plo, phi_hi, phi.values)
    keep = g != 0.0
    return intensity * w[keep], g[keep]


# sampling ----------------------------------------------------------------

def _check_window(model, window):
    if window.dim != model.dim:
        raise ArgumentError(f"window has dimension {window.dim}, model has {model.dim}")
    if not window.bounded:
        raise ArgumentError("window must be bounded")


def sample(model: FieldModel, window: Box, seed: int) -> SampleMeasure:
    """One draw of ``model`` on ``window``; a pure function of (model, window, seed)."""
    _check_window(model, window)
    gen = rngmod.stream(seed, rngmod.SPLIT, rngmod.PRIMARY)
    anchors, values = model._draw_noise(gen, model.noise_region(window))
    return model._realize(anchors, values, window)


@dataclass(frozen=True, eq=False)
class SplitSample:
    x0: SampleMeasure
    xminus: SampleMeasure
    xplus: SampleMeasure
    leak: SampleMeasure
    axis: int
    offset: float


def split_sample(model: FieldModel, window: Box, axis: int, offset: float,
                 seed: int) -> SplitSample:
    """Coupled split of ``model`` across ``{t[axis] = offset}``.

    ``x0`` equals ``sample(model, window, seed)``.
    """
    _check_window(model, window)
    if not 0 <= axis < model.dim:
        raise ArgumentError(f"axis {axis} out of range")
    if not window.lower[axis] < offset < window.upper[axis]:
        raise ArgumentError("hyperplane does not cut the window")
    region = model.noise_region(window)
    a0, v0 = model._draw_noise(rngmod.stream(seed, rngmod.SPLIT, rngmod.PRIMARY), region)
    a1, v1 = model._draw_noise(rngmod.stream(seed, rngmod.SPLIT, rngmod.SECONDARY), region)
    low0 = a0[:, axis] < offset
    low1 = a1[:, axis] < offset
    x0 = model._realize(a0, v0, window)
    xminus = model._realize(np.vstack([a0[low0], a1[~low1]]),
                            np.concatenate([v0[low0], v1[~low1]]), window)
    xplus = model._realize(np.vstack([a1[low1], a0[~low0]]),
                           np.concatenate([v1[low1], v0[~low0]]), window)
    lower, upper = _halves(window, axis, offset)
    parts = [_clipped(xminus, lower, 1.0), _clipped(x0, lower, -1.0),
             _clipped(xplus, upper, 1.0), _clipped(x0, upper, -1.0)]
    leak = SampleMeasure.build(
        model.dim, window,
        np.vstack([p[0] for p in parts]), np.concatenate([p[1] for p in parts]),
        np.vstack([p[2] for p in parts]), np.vstack([p[3] for p in parts]),
        np.concatenate([p[4] for p in parts]), check=False,
    )
    return SplitSample(x0, xminus, xplus, leak, axis, float(offset))


def _clipped(m, box, c):
    """Arrays of ``c * m`` restricted to ``box``."""
    inside = np.all((m.points >= box.lo) & (m.points < box.hi), axis=1)
    lo = np.maximum(m.cell_lo, box.lo)
    hi = np.minimum(m.cell_hi, box.hi)
    hit = np.all(hi > lo, axis=1)
    return m.points[inside], c * m.weights[inside], lo[hit], hi[hit], c * m.densities[hit]


def _halves(window, axis, offset):
    hi = list(window.upper)
    hi[axis] = offset
    lo = list(window.lower)
    lo[axis] = offset
    return Box(window.lower, hi), Box(lo, window.upper)


def leak_support_radius(split: SplitSample) -> float:
    """Largest distance from the hyperplane at which the leak has mass."""
    leak, ax, off = split.leak, split.axis, split.offset
    radius = 0.0
    if leak.n_atoms:
        radius = max(radius, float(np.max(np.abs(leak.points[:, ax] - off))))
    if leak.n_cells:
        far = np.maximum(leak.cell_hi[:, ax] - off, off - leak.cell_lo[:, ax])
        radius = max(radius, float(far.max()))
    return radius


@dataclass(frozen=True)
class UVWZSample:
    u: float
    v: float
    w: float
    z: float


def decompose_uvwz(model: FieldModel, r: float, b: Box | None, seed: int) -> UVWZSample:
    """Half-window integrals of a coupled split over ``[-r, r) x b``."""
    if not r > 0:
        raise ArgumentError("r must be positive")
    if model.dim == 1:
        if b is not None:
            raise ArgumentError("no cross-section box in dimension 1")
        tail_lo, tail_hi = [], []
    else:
        if b is None or b.dim != model.dim - 1:
            raise ArgumentError(f"cross-section box must have dimension {model.dim - 1}")
        tail_lo, tail_hi = list(b.lower), list(b.upper)
    window = Box([-r] + tail_lo, [r] + tail_hi)
    s = split_sample(model, window, 0, 0.0, seed)
    u = integrate_box(s.xminus, Box([-r] + tail_lo, [0.0] + tail_hi))
    v = integrate_box(s.xplus, Box([0.0] + tail_lo, [r] + tail_hi))
    w = integrate_box(s.x0, window)
    z = integrate_box(s.leak, window)
    return UVWZSample(u, v, w, z)


def leak_marginal(split: SplitSample, b1: Box) -> SampleMeasure:
    """Leak integrated over ``b1`` along the first axis, as a measure on the
    remaining axes.  The model's splitting constant applies to it unchanged."""
    d = split.leak.dim
    if d == 1:
        raise UnsupportedError("leak marginal needs dimension at least 2")
    if b1.dim != 1:
        raise ArgumentError("b1 must be a one-dimensional box")
    return marginalize(split.leak, list(range(1, d)), b1)


# certificates --------------------------------------------------------------

def splittable_constant(model: FieldModel) -> float:
    """Smallest C with E exp(variation over the unit cube / C) <= 2."""
    target = LN2
    s = _bisect_increasing(model.unit_cube_log_mgf, target, 0.0, 1.0)
    return 1.0 / s


def certificate_check(model: FieldModel, n: int, seed: int) -> dict:
    """Monte Carlo estimate of E exp(variation / C_split) on the unit cube."""
    c = model.C_split
    cube = Box([0.0] * model.dim, [1.0] * model.dim)
    vals = np.empty(n)
    for i in range(n):
        m = sample(model, cube, _replica_seed(seed, i))
        vals[i] = math.exp(variation_box(m, cube) / c)
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(n))
    return {"C_split": c, "mean": mean, "se": se, "holds": mean <= 2.0 + 3.0 * se}


def _replica_seed(seed, i):
    return int(np.random.SeedSequence(rngmod.check_seed(seed), spawn_key=(rngmod.SAMPLE, i))
               .generate_state(2, np.uint64)[0])


# batched integrals -------------------------------------------------------------

_CHUNK = 4096


def sample_integrals(model: FieldModel, phi: TestFunction, r, n: int, seed: int,
                     threads: int = 1) -> np.ndarray:
    """``n`` independent draws of the integral of ``phi(t / r)`` against the field.

    Same law as ``integrate_scaled(sample(...), phi, r)`` but computed from
    the sufficient statistics of each model.  Draws are produced in fixed
    chunks, each with its own stream, so the output does not depend on
    ``threads``.
    """
    if phi.dim != model.dim:
        raise ArgumentError("test function dimension differs from model")
    plan = _integral_plan(model, phi, r)
    starts = list(range(0, n, _CHUNK))

    def work(k):
        size = min(_CHUNK, n - starts[k])
        return plan(rngmod.stream(seed, rngmod.BATCH, k), size)

    if threads > 1 and len(starts) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(work, range(len(starts))))
    else:
        parts = [work(k) for k in range(len(starts))]
    return np.concatenate(parts) if parts else np.zeros(0)


def _integral_plan(model, phi, r):
    lo, hi = phi.scaled_corners(r)
    vals = phi.values
    vols = np.prod(hi - lo, axis=1)
    if isinstance(model, CenteredPoisson):
        means = model.intensity * vols

        def plan(gen, size):
            counts = gen.poisson(means, size=(size, len(means)))
            return model.mass * ((counts - means) @ vals)

        return plan
    if isinstance(model, BlockIID):
        support = Box(lo.min(axis=0), hi.max(axis=0))
        start = np.floor(support.lo)
        stop = np.ceil(support.hi)
        axes = [np.arange(a, b) for a, b in zip(start, stop)]
        cells = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, model.dim)
        cells = cells.astype(float)
        weights = kernels.cells_in_boxes(lo, hi, vals, cells, cells + 1.0)
        weights = weights[weights != 0.0]

        def plan(gen, size):
            signs = gen.integers(0, 2, size=(size, len(weights))) * 2.0 - 1.0
            return model.amplitude * (signs @ weights)

        return plan
    if isinstance(model, ShotNoise):
        return _shot_noise_plan(model, phi, lo, hi, vals)
    raise UnsupportedError(f"no batched sampler for {model.name}")


def _shot_noise_plan(model, phi, lo, hi, vals):
    k = model.kernel
    kmin = k.lo.min(axis=0)
    kmax = k.hi.max(axis=0)
    region = Box(lo.min(axis=0) - kmax, hi.max(axis=0) - kmin)
    # points whose whole kernel sits inside one piece contribute a constant
    inner = []
    for a, b, v in zip(lo, hi, vals):
        dlo, dhi = a - kmin, b - kmax
        if np.all(dhi > dlo):
            inner.append((Box(dlo, dhi), v))
    rest = [region]
    for box, _ in inner:
        rest = [piece for q in rest for piece in box_difference(q, box)]
    inner_means = np.array([model.intensity * b.volume for b, _ in inner])
    inner_vals = np.array([v for _, v in inner]) * model.kernel_integral
    rest_lo = np.array([b.lo for b in rest]).reshape(-1, model.dim)
    rest_hi = np.array([b.hi for b in rest]).reshape(-1, model.dim)
    rest_means = model.intensity * np.prod(rest_hi - rest_lo, axis=1)
    compensator = model.intensity * model.kernel_integral * float(vals @ np.prod(hi - lo, axis=1))

    def plan(gen, size):
        total = np.zeros(size)
        if len(inner):
            counts = gen.poisson(inner_means, size=(size, len(inner)))
            total += counts @ inner_vals
        if len(rest):
            counts = gen.poisson(rest_means, size=(size, len(rest)))
            flat = counts.ravel()
            owner = np.repeat(np.arange(size * len(rest)), flat)
            box_id = owner % len(rest)
            u = gen.random((len(owner), model.dim))
            pts = rest_lo[box_id] + u * (rest_hi[box_id] - rest_lo[box_id])
            g = kernels.kernel_overlap(pts, k.lo, k.hi, k.values, lo, hi, vals)
            total += np.bincount(owner // len(rest), weights=g, minlength=size)
        return model.mass * (total - compensator)

    return plan


# split statistics ------------------------------------------------------------

def _ks_critical(alpha):
    """Asymptotic Kolmogorov critical value c(alpha)."""
    return math.sqrt(-0.5 * math.log(alpha / 2.0))


def default_probes(window: Box, axis: int, offset: float) -> dict[str, Box]:
    width = min(offset - window.lower[axis], window.upper[axis] - offset, 2.0)

    def slab(a, b):
        lo, hi = list(window.lower), list(window.upper)
        lo[axis], hi[axis] = a, b
        return Box(lo, hi)

    return {
        "lower": slab(offset - width, offset),
        "upper": slab(offset, offset + width),
        "straddle": slab(offset - width / 2, offset + width / 2),
    }


def _functionals(m, window, axis, offset, side):
    """Eight bounded functionals of ``m`` on one side of the hyperplane."""
    width = min(offset - window.lower[axis], window.upper[axis] - offset)
    edges = np.linspace(0.0, width, 5)
    lo = np.tile(window.lo, (4, 1))
    hi = np.tile(window.hi, (4, 1))
    if side < 0:
        lo[:, axis] = offset - edges[1:]
        hi[:, axis] = offset - edges[:-1]
    else:
        lo[:, axis] = offset + edges[:-1]
        hi[:, axis] = offset + edges[1:]
    s = integrate_boxes(m, lo, hi)
    return np.concatenate([np.tanh(s), s / (1.0 + np.abs(s))])


@dataclass
class SplitReport:
    n_draws: int
    ks: dict
    ks_threshold: float
    ks_pass: bool
    max_abs_z: float
    min_p_bonferroni: float
    independence_pass: bool
    leak_radius: float
    leak_zero: bool
    passed: bool = field(init=False)

    def __post_init__(self):
        self.passed = self.ks_pass and self.independence_pass

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def verify_split_statistics(model: FieldModel, window: Box, axis: int, offset: float,
                            n_draws: int, seed: int, alpha: float = 0.01,
                            probes: dict | None = None) -> SplitReport:
    """Distributional checks of the coupled split.

    Compares the laws of box integrals of ``x0``, ``xminus`` and ``xplus``
    with independent draws of ``sample`` (two-sample KS, Bonferroni over all
    probe/copy pairs at family level ``alpha``), tests cross-half
    covariances of eight bounded functionals per half, and records the leak
    support radius.
    """
    if n_draws < 1000:
        raise ArgumentError("n_draws must be at least 1000")
    probes = probes or default_probes(window, axis, offset)
    plo = np.array([b.lo for b in probes.values()])
    phi_ = np.array([b.hi for b in probes.values()])
    names = list(probes)
    copies = {"x0": [], "xminus": [], "xplus": [], "reference": []}
    fminus, fplus = [], []
    radius = 0.0
    leak_zero = True
    for i in range(n_draws):
        s = split_sample(model, window, axis, offset, _replica_seed(seed, i))
        ref = sample(model, window, _replica_seed(seed, n_draws + i))
        copies["x0"].append(integrate_boxes(s.x0, plo, phi_))
        copies["xminus"].append(integrate_boxes(s.xminus, plo, phi_))
        copies["xplus"].append(integrate_boxes(s.xplus, plo, phi_))
        copies["reference"].append(integrate_boxes(ref, plo, phi_))
        fminus.append(_functionals(s.xminus, window, axis, offset, -1))
        fplus.append(_functionals(s.xplus, window, axis, offset, +1))
        radius = max(radius, leak_support_radius(s))
        if leak_zero and np.any(integrate_boxes(s.leak, plo, phi_) != 0.0):
            leak_zero = False
    ref = np.array(copies["reference"])
    ks = {}
    for key in ("x0", "xminus", "xplus"):
        arr = np.array(copies[key])
        for j, name in enumerate(names):
            ks[f"{key}/{name}"] = float(
                stats.ks_2samp(arr[:, j], ref[:, j], method="asymp").statistic)
    n_tests = len(ks)
    threshold = _ks_critical(alpha / n_tests) * math.sqrt(2.0 / n_draws)
    fm = np.array(fminus)
    fp = np.array(fplus)
    fm = fm - fm.mean(axis=0)
    fp = fp - fp.mean(axis=0)
    prod = fm[:, :, None] * fp[:, None, :]
    cov = prod.mean(axis=0)
    se = prod.std(axis=0, ddof=1) / math.sqrt(n_draws)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, cov / se, 0.0)
    max_z = float(np.max(np.abs(z)))
    p_bonf = float(min(1.0, 2.0 * stats.norm.sf(max_z) * z.size))
    return SplitReport(
        n_draws=n_draws, ks=ks, ks_threshold=threshold,
        ks_pass=all(v < threshold for v in ks.values()),
        max_abs_z=max_z, min_p_bonferroni=p_bonf, independence_pass=max_z <= 4.0,
        leak_radius=radius, leak_zero=leak_zero,
    )
