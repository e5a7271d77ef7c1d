"""Cumulant generating functions of field integrals.

Exact formulas cover every model in :mod:`splitfield.fields`.  For the
Poisson-driven models the integral ``S = int phi(t / r) X(dt)`` is a
compensated compound-Poisson sum, so ``log E exp(lam S)`` is a weighted sum
of ``exp(lam a) - 1 - lam a`` over jump sizes ``a``; for ``BlockIID`` it is
a sum of ``log cosh(lam a)`` over cells.  :class:`CgfTerms` stores those
weights and jump sizes once, and every other quantity (values, variance,
quadratic tail bound) is read off it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from . import kernels
from . import rng as rngmod
from .errors import ArgumentError, PremiseError, UnsupportedError
from .fields import (
    BlockIID,
    CenteredPoisson,
    FieldModel,
    ShotNoise,
    _overlap_levy,
    exm1mx,
    logcosh,
    sample_integrals,
)
from .measure import Box, TestFunction


@dataclass(frozen=True)
class CgfTerms:
    """``K(lam) = sum_j weights[j] * g(lam * amps[j])`` with ``g`` either
    ``exp(x) - 1 - x`` (kind ``"poisson"``) or ``log cosh x`` (``"rademacher"``)."""

    kind: str
    weights: np.ndarray
    amps: np.ndarray

    def __call__(self, lam):
        lam = np.asarray(lam, dtype=float)
        x = lam[..., None] * self.amps
        g = exm1mx(x) if self.kind == "poisson" else logcosh(x)
        out = g @ self.weights if len(self.weights) else np.zeros(lam.shape)
        return out if out.ndim else float(out)

    @property
    def variance(self) -> float:
        return float(self.weights @ self.amps ** 2)

    def quadratic_bound(self, lam_max: float) -> float:
        """``c`` with ``K(lam) <= c lam^2`` for all ``|lam| <= lam_max``."""
        if not len(self.amps):
            return 0.0
        if self.kind == "rademacher":
            return 0.5 * self.variance
        # exp(x) - 1 - x <= x^2 / 2 * exp(|x|)
        top = float(np.max(np.abs(self.amps))) * lam_max
        return 0.5 * self.variance * math.exp(top)

    def __add__(self, other: CgfTerms) -> CgfTerms:
        if self.kind != other.kind:
            raise ArgumentError("cannot add CGF terms of different kinds")
        return CgfTerms(self.kind, np.concatenate([self.weights, other.weights]),
                        np.concatenate([self.amps, other.amps]))


def cgf_terms(model: FieldModel, phi: TestFunction, r) -> CgfTerms:
    """Exact description of the law of ``int phi(t / r) X(dt)``."""
    if phi.dim != model.dim:
        raise ArgumentError("test function dimension differs from model")
    if isinstance(model, CenteredPoisson):
        lo, hi = phi.scaled_corners(r)
        vols = np.prod(hi - lo, axis=1)
        return CgfTerms("poisson", model.intensity * vols, model.mass * phi.values)
    if isinstance(model, ShotNoise):
        w, g = _overlap_levy(model.intensity, model.kernel.values, model.kernel, phi, r)
        return CgfTerms("poisson", w, model.mass * g)
    if isinstance(model, BlockIID):
        cells, g = _lattice_weights(phi, r)
        return CgfTerms("rademacher", np.ones(len(g)), model.amplitude * g)
    raise UnsupportedError(f"{model.name} has no exact CGF")


def _lattice_weights(phi, r):
    lo, hi = phi.scaled_corners(r)
    start = np.floor(lo.min(axis=0))
    stop = np.ceil(hi.max(axis=0))
    axes = [np.arange(a, b) for a, b in zip(start, stop)]
    cells = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, phi.dim)
    g = kernels.cells_in_boxes(lo, hi, phi.values, cells, cells + 1.0)
    keep = g != 0.0
    return cells[keep], g[keep]


def analytic_cgf(model: FieldModel, phi: TestFunction, r, lam):
    """``log E exp(lam * int phi(t / r) X(dt))``; ``lam`` may be an array."""
    if not model.has_exact_cgf:
        raise UnsupportedError(f"{model.name} has no exact CGF")
    return cgf_terms(model, phi, r)(lam)


def restrict_phi(phi: TestFunction, box: Box) -> TestFunction | None:
    """``phi * 1_box`` or None when the product vanishes."""
    pieces = []
    for b, v in phi.pieces:
        c = b.intersect(box)
        if c is not None:
            pieces.append((c, v))
    return TestFunction(tuple(pieces), phi.sup_error, False) if pieces else None


def _half_space(dim, axis, offset, upper):
    lo = [-np.inf] * dim
    hi = [np.inf] * dim
    if upper:
        lo[axis] = offset
    else:
        hi[axis] = offset
    return Box(lo, hi)


def leak_cgf_terms(model: FieldModel, phi: TestFunction, r, axis: int = 0,
                   offset: float = 0.0) -> CgfTerms:
    """Exact law of the leak integral ``int phi(t / r) leak(dt)`` for the
    split across ``{t[axis] = offset}`` built by :func:`fields.split_sample`.

    Only points (or lattice cells) anchored below the hyperplane whose
    influence crosses it contribute; each contributes the difference of two
    independent copies.
    """
    rr = np.broadcast_to(np.asarray(r, float), (model.dim,))
    upper = restrict_phi(phi, _half_space(model.dim, axis, offset / rr[axis], True))
    if isinstance(model, CenteredPoisson) or upper is None:
        kind = "rademacher" if isinstance(model, BlockIID) else "poisson"
        return CgfTerms(kind, np.zeros(0), np.zeros(0))
    if isinstance(model, ShotNoise):
        below = _half_space(model.dim, axis, offset, False)
        w, g = _overlap_levy(model.intensity, model.kernel.values, model.kernel, upper, r,
                             region=below)
        a = model.mass * g
        return CgfTerms("poisson", np.concatenate([w, w]), np.concatenate([a, -a]))
    if isinstance(model, BlockIID):
        cells, g = _lattice_weights(upper, r)
        cut = cells[:, axis] < offset
        a = model.amplitude * g[cut]
        return CgfTerms("rademacher", np.ones(2 * len(a)), np.concatenate([a, a]))
    raise UnsupportedError(f"{model.name} has no exact leak CGF")


def sigma_of_model(model: FieldModel, mode: str = "analytic", r: float = 64.0,
                   n: int = 100_000, seed: int = 0, threads: int = 1) -> float:
    """Asymptotic standard deviation per unit volume."""
    if mode == "analytic":
        return math.sqrt(model.sigma_sq)
    if mode != "empirical":
        raise ArgumentError(f"unknown mode {mode!r}")
    if r < 16 or n < 10_000:
        raise ArgumentError("empirical mode needs r >= 16 and n >= 10^4")
    unit = TestFunction.indicator(Box([0.0] * model.dim, [1.0] * model.dim))
    s = sample_integrals(model, unit, r, n, seed, threads)
    return float(np.std(s, ddof=1) / r ** (model.dim / 2))


# Monte Carlo -----------------------------------------------------------------

@dataclass(frozen=True)
class CgfEstimate:
    lam: float
    value: float
    ci_low: float
    ci_high: float
    n: int
    ess: float
    flag: str
    se: float = 0.0  # delta-method standard error of ``value``

    def row(self) -> list:
        return [self.lam, self.value, self.ci_low, self.ci_high, self.n, self.ess, self.flag]


CSV_COLUMNS = ["lambda", "value", "ci_low", "ci_high", "n", "ess", "flag"]


def log_mean_exp(x: np.ndarray) -> float:
    return float(logsumexp(x) - math.log(len(x)))


def estimate_cgf(samples: np.ndarray, lambdas: Sequence[float], seed: int,
                 n_boot: int = 1000, level: float = 0.95) -> list[CgfEstimate]:
    """Log-mean-exp estimates with percentile bootstrap intervals.

    When the samples take few distinct values the bootstrap resamples
    multinomial counts over those values, which has the same law as
    resampling indices and costs far less.
    """
    x = np.asarray(samples, dtype=float)
    n = len(x)
    lambdas = [float(v) for v in lambdas]
    uniq, counts = np.unique(x, return_counts=True)
    gen = rngmod.stream(seed, rngmod.BOOTSTRAP)
    lam_arr = np.array(lambdas)
    if len(uniq) <= 4096:
        boot_counts = gen.multinomial(n, counts / n, size=n_boot).astype(float)
        ex = lam_arr[:, None] * uniq[None]
        shift = ex.max(axis=1, keepdims=True)
        mat = np.exp(ex - shift)
        boot = np.log((boot_counts @ mat.T) / n) + shift.T
    else:
        boot = np.empty((n_boot, len(lam_arr)))
        ex = lam_arr[:, None] * x[None]
        shift = ex.max(axis=1)
        y = np.exp(ex - shift[:, None])
        for b in range(n_boot):
            idx = gen.integers(0, n, size=n)
            boot[b] = np.log(y[:, idx].mean(axis=1)) + shift
    alpha = (1.0 - level) / 2.0
    out = []
    for j, lam in enumerate(lambdas):
        if lam == 0.0:
            out.append(CgfEstimate(0.0, 0.0, 0.0, 0.0, n, float(n), "ok", 0.0))
            continue
        ex = lam * x
        value = log_mean_exp(ex)
        w = np.exp(ex - ex.max())
        ess = float(w.sum() ** 2 / (w @ w))
        se = float(w.std(ddof=1) / (w.mean() * math.sqrt(n))) if n > 1 else math.inf
        lo, hi = np.quantile(boot[:, j], [alpha, 1.0 - alpha])
        flag = "ok" if ess >= 0.01 * n else "unstable"
        out.append(CgfEstimate(lam, value, float(min(lo, value)), float(max(hi, value)), n,
                               ess, flag, se))
    return out


def mc_cgf(model: FieldModel, phi: TestFunction, r, lambdas: Sequence[float], n: int,
           seed: int, n_boot: int = 1000, threads: int = 1) -> list[CgfEstimate]:
    """Monte Carlo CGF of ``int phi(t / r) X(dt)`` on a grid of ``lambdas``."""
    if n < 1000:
        raise ArgumentError("n must be at least 1000")
    s = sample_integrals(model, phi, r, n, seed, threads)
    return estimate_cgf(s, lambdas, seed, n_boot)


# discrete laws and premise families ---------------------------------------------

@dataclass(frozen=True)
class DiscreteLaw:
    """Finitely supported law with exact expectations."""

    values: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, float)
        p = np.asarray(self.probs, float)
        if v.shape != p.shape or np.any(p < 0) or not math.isclose(p.sum(), 1.0, abs_tol=1e-12):
            raise ArgumentError("probabilities must be nonnegative and sum to 1")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "probs", p)

    def cgf(self, lam):
        lam = np.asarray(lam, float)
        with np.errstate(divide="ignore"):
            logp = np.log(self.probs)
        out = logsumexp(lam[..., None] * self.values + logp, axis=-1)
        return out if np.ndim(out) else float(out)

    def expect(self, fn: Callable) -> float:
        return float(self.probs @ fn(self.values))

    @property
    def mean(self) -> float:
        return float(self.probs @ self.values)

    def sample(self, n, gen) -> np.ndarray:
        return gen.choice(self.values, size=n, p=self.probs)


def _scale_to(law_values, probs, constraint, limit):
    """Largest scale ``s`` (found by bisection) keeping ``constraint(s * v) <= limit``."""
    lo, hi = 0.0, 1.0
    while constraint(hi * law_values) <= limit:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if constraint(mid * law_values) <= limit:
            lo = mid
        else:
            hi = mid
    return lo


def premise_families(kind: str, count: int, seed: int) -> list[DiscreteLaw]:
    """Random centered discrete laws meeting an exponential-moment premise.

    ``kind="abs2"`` gives ``E exp|Z| <= 2``; ``kind="quarter"`` gives
    ``E exp(W) <= 5/4`` and ``E exp(-W) <= 5/4``.  Each law is a random
    centered law scaled by a uniform fraction of its largest admissible scale.
    """
    gen = rngmod.stream(seed, rngmod.SAMPLE, 99)
    laws = []
    for _ in range(count):
        k = int(gen.integers(2, 8))
        v = gen.standard_normal(k) * gen.exponential(1.0, k)
        p = gen.dirichlet(np.ones(k))
        v = v - p @ v
        if np.all(v == 0):
            v = np.zeros(k)
        if kind == "abs2":
            cons = lambda x, p=p: float(p @ np.exp(np.abs(x)))  # noqa: E731
            limit = 2.0
        elif kind == "quarter":
            cons = lambda x, p=p: float(max(p @ np.exp(x), p @ np.exp(-x)))  # noqa: E731
            limit = 1.25
        else:
            raise ArgumentError(f"unknown family {kind!r}")
        s = _scale_to(v, p, cons, limit) * float(gen.uniform(0.05, 1.0))
        laws.append(DiscreteLaw(s * v, p))
    return laws


@dataclass
class InequalityReport:
    name: str
    holds: bool
    max_violation: float
    n_checks: int
    witness: dict | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _certify_premise(law: DiscreteLaw, certificate: str):
    if abs(law.mean) > 1e-12:
        raise PremiseError("the law is not centered")
    if certificate == "abs2":
        ok = law.expect(lambda v: np.exp(np.abs(v))) <= 2.0 + 1e-12
    elif certificate == "quarter":
        ok = (law.expect(np.exp) <= 1.25 + 1e-12
              and law.expect(lambda v: np.exp(-v)) <= 1.25 + 1e-12)
    else:
        raise ArgumentError(f"unknown certificate {certificate!r}")
    if not ok:
        raise PremiseError(f"premise {certificate!r} does not hold")


def subexp_quadratic_check(law: DiscreteLaw, certificate: str,
                           lambdas: Sequence[float] | None = None, n_mc: int = 0,
                           seed: int = 0, tol: float = 1e-12) -> InequalityReport:
    """Check ``log E exp(lam Z) <= lam^2`` on ``|lam| <= 1``.

    The premise is verified exactly on the discrete law before anything else;
    if it fails the check is refused.  With ``n_mc > 0`` the CGF is estimated
    from samples and a violation counts only beyond the bootstrap interval.
    """
    _certify_premise(law, certificate)
    lams = np.linspace(-1.0, 1.0, 201) if lambdas is None else np.asarray(lambdas, float)
    if np.any(np.abs(lams) > 1.0):
        raise ArgumentError("the conclusion is only claimed for |lambda| <= 1")
    if n_mc:
        est = estimate_cgf(law.sample(n_mc, rngmod.stream(seed, rngmod.SAMPLE)), lams, seed)
        gap = np.array([e.ci_low for e in est]) - lams ** 2
    else:
        gap = law.cgf(lams) - lams ** 2
    worst = int(np.argmax(gap))
    viol = float(gap[worst])
    return InequalityReport(
        f"subexp-{certificate}", viol <= tol, viol, len(lams),
        None if viol <= tol else {"lambda": float(lams[worst]), "excess": viol},
    )


def holder_sandwich_check(x_cgf: Callable, y_cgf: Callable, joint_cgf: Callable,
                          p_values: Sequence[float], scales: Sequence[float] = (1.0,),
                          tol: float = 1e-12) -> InequalityReport:
    """Check the two-sided Hoelder bound for ``K_{X+Y}`` at ``t * (X + Y)``:

    ``p K_X(t/p) - (p-1) K_Y(-t/(p-1)) <= K_{X+Y}(t)
    <= K_X(p t)/p + (p-1)/p K_Y(p t/(p-1))``.

    The callables take a scalar multiplier; ``scales`` lists the ``t`` values.
    """
    worst = -np.inf
    witness = None
    n = 0
    for p in p_values:
        if not p > 1:
            raise ArgumentError("p must exceed 1")
        q = p / (p - 1.0)
        for t in scales:
            mid = joint_cgf(t)
            upper = x_cgf(p * t) / p + y_cgf(q * t) / q
            lower = p * x_cgf(t / p) - (p - 1.0) * y_cgf(-t / (p - 1.0))
            for side, gap in (("upper", mid - upper), ("lower", lower - mid)):
                n += 1
                if np.isnan(gap):
                    gap = np.inf
                if gap > worst:
                    worst = float(gap)
                    witness = {"p": p, "t": t, "side": side, "excess": float(gap)}
    return InequalityReport("holder-sandwich", worst <= tol, worst, n,
                            None if worst <= tol else witness)


# box-shape properties of the model CGF ----------------------------------------------

def _box_cgf(model, shape, lam):
    """``log E exp(lam * int over [0, shape) X)``, un-normalized."""
    box = TestFunction.indicator(Box([0.0] * model.dim, list(shape)))
    return analytic_cgf(model, box, 1.0, lam)


def normalized_cgf(model: FieldModel, shape, lam):
    """``f(lam; shape)``: CGF of ``lam / sqrt(vol) * int over the box``."""
    vol = float(np.prod(shape))
    return _box_cgf(model, shape, np.asarray(lam, float) / math.sqrt(vol))


def model_f_properties(model: FieldModel, shapes: Sequence[Sequence[float]],
                       lambdas: Sequence[float], tol: float = 1e-12) -> dict:
    """Per-model versions of three shape properties of the sup-CGF.

    * monotone: ``log E exp(lam * int over box)`` grows with the box;
    * subadditive: splitting the first side ``r + s`` into ``r`` and ``s``,
      ``K(lam; r+s) <= (K(2 lam; r) + K(2 lam; s)) / 2`` (Cauchy-Schwarz);
    * small-lambda: ``f(lam)/lam^2`` settles to a finite limit as
      ``lam -> 0``, and a grid ``eps`` with ``f(+-eps) <= log(5/4)`` exists.
    """
    lams = np.asarray(lambdas, float)
    shapes = [tuple(float(x) for x in s) for s in shapes]
    cache = {s: _box_cgf(model, s, lams) for s in shapes}
    mono_viol = -np.inf
    mono_n = 0
    for a in shapes:
        for b in shapes:
            if a != b and all(x <= y for x, y in zip(a, b)):
                mono_n += len(lams)
                mono_viol = max(mono_viol, float(np.max(cache[a] - cache[b])))
    sub_viol = -np.inf
    sub_n = 0
    for a in shapes:
        for b in shapes:
            if a[1:] != b[1:]:
                continue
            joined = (a[0] + b[0],) + a[1:]
            left = _box_cgf(model, joined, lams)
            right = 0.5 * (_box_cgf(model, a, 2 * lams) + _box_cgf(model, b, 2 * lams))
            sub_n += len(lams)
            sub_viol = max(sub_viol, float(np.max(left - right)))
    small = {}
    ladder = 2.0 ** -np.arange(1, 30)
    for s in shapes:
        ratio = normalized_cgf(model, s, ladder) / ladder ** 2
        steps = np.abs(np.diff(ratio))
        eps_grid = np.geomspace(1e-6, 1.0, 121)
        ok = np.maximum(normalized_cgf(model, s, eps_grid), normalized_cgf(model, s, -eps_grid))
        good = eps_grid[ok <= math.log(1.25)]
        small[str(s)] = {
            "limit": float(ratio[-1]),
            "settles": bool(steps[-1] <= steps[0] and np.isfinite(ratio[-1])),
            "eps": float(good.max()) if len(good) else 0.0,
        }
    return {
        "monotone": {"holds": mono_viol <= tol, "max_violation": _finite(mono_viol),
                     "n_checks": mono_n},
        "subadditive": {"holds": sub_viol <= tol, "max_violation": _finite(sub_viol),
                        "n_checks": sub_n},
        "small_lambda": small,
        "holds": mono_viol <= tol and sub_viol <= tol
        and all(v["settles"] and v["eps"] > 0 for v in small.values()),
    }


def _finite(x):
    return None if not np.isfinite(x) else float(x)
