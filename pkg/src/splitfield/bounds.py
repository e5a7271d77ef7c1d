"""Certified tabulated upper bounds for normalized box CGFs and their
propagation under box doubling.

A :class:`BoundTable` stores upper bounds ``T(lam) >= f(lam; shape)`` on a
symmetric geometric grid.  Because the underlying ``f`` is convex with
``f(0) = 0``, the chord between neighbouring grid values bounds ``f`` from
above, so every off-grid lookup stays conservative.  ``inf`` is a regular
table value and absorbs under every operation.

The doubling step bounds the table of the box with one side doubled by

``(2/p) T(p lam / sqrt 2) + leak(p, lam)``

minimized over ``p > 1``.  The leak term is either the quadratic
``C_prev * p/(p-1) * lam^2 / (2 r)``, valid in an admissible range of
``lam``, or the general form ``(p-1)/p * L(-p/(p-1) * lam / sqrt(2 r))``
read from a lower-dimensional table ``L``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import ArgumentError

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
TOL = 1e-12


def symmetric_grid(lam_max: float = 1.0, n_pos: int = 100, ratio: float = 2 ** 0.25) -> np.ndarray:
    """``0`` plus ``+-lam_max * ratio^-k`` for ``k < n_pos``, sorted.

    The default ratio makes the grid closed under multiplication by
    ``sqrt 2`` (two grid steps), which is the rescaling used by doubling.
    """
    pos = lam_max * ratio ** -np.arange(n_pos, dtype=float)
    return np.concatenate([-pos, [0.0], pos[::-1]])


@dataclass(frozen=True, eq=False)
class BoundTable:
    shape: tuple
    lambdas: np.ndarray
    values: np.ndarray
    provenance: str = "base"
    tail: float = math.inf

    def __post_init__(self):
        lam = np.asarray(self.lambdas, float)
        val = np.asarray(self.values, float)
        if lam.shape != val.shape or lam.ndim != 1:
            raise ArgumentError("grid and values must be matching vectors")
        if np.any(np.diff(lam) <= 0):
            raise ArgumentError("grid must be strictly increasing")
        zero = np.flatnonzero(lam == 0.0)
        if len(zero) != 1 or not np.allclose(lam, -lam[::-1], rtol=0, atol=0):
            raise ArgumentError("grid must be symmetric and contain 0")
        if np.any(np.isnan(val)) or np.any(val < 0):
            raise ArgumentError("table values must lie in [0, inf]")
        if val[zero[0]] != 0.0:
            raise ArgumentError("table value at 0 must be 0")
        lam.setflags(write=False)
        val = val.copy()
        val.setflags(write=False)
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "values", val)
        object.__setattr__(self, "shape", tuple(float(s) for s in self.shape))

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def volume(self) -> float:
        return float(np.prod(self.shape)) if self.shape else 1.0

    @property
    def lam_min(self) -> float:
        return float(self.lambdas[self.lambdas > 0][0])

    @property
    def lam_max(self) -> float:
        return float(self.lambdas[-1])

    @classmethod
    def from_function(cls, shape, fn: Callable, grid=None, tail=math.inf,
                      provenance="base") -> BoundTable:
        grid = symmetric_grid() if grid is None else np.asarray(grid, float)
        vals = np.asarray(fn(grid), float)
        vals[grid == 0.0] = 0.0
        return cls(tuple(shape), grid, vals, provenance, tail)

    def interp(self, lam) -> np.ndarray:
        """Conservative chord interpolation; ``inf`` outside the grid range."""
        x = np.asarray(lam, float)
        g, v = self.lambdas, self.values
        idx = np.clip(np.searchsorted(g, x, side="right") - 1, 0, len(g) - 2)
        x0, x1 = g[idx], g[idx + 1]
        v0, v1 = v[idx], v[idx + 1]
        with np.errstate(invalid="ignore", divide="ignore"):
            t = (x - x0) / (x1 - x0)
            chord = np.where(np.isinf(v0) | np.isinf(v1), np.inf, v0 + (v1 - v0) * t)
        out = np.where(x == x0, v0, chord)
        out = np.where(x == x1, v1, out)
        out = np.where((x < g[0]) | (x > g[-1]) | np.isnan(x), np.inf, out)
        near = np.abs(x) < self.lam_min
        if np.isfinite(self.tail):
            out = np.where(near, np.minimum(out, self.tail * x * x), out)
        return out if out.ndim else float(out)

    def with_values(self, values, provenance=None, tail=None, shape=None) -> BoundTable:
        return BoundTable(self.shape if shape is None else shape, self.lambdas, values,
                          provenance or self.provenance,
                          self.tail if tail is None else tail)

    # exchange format -------------------------------------------------------
    def to_csv(self) -> str:
        lines = ["shape," + ",".join(repr(s) for s in self.shape),
                 f"# provenance={self.provenance}", f"# tail={_fmt(self.tail)}",
                 "lambda,value"]
        lines += [f"{_fmt(a)},{_fmt(b)}" for a, b in zip(self.lambdas, self.values)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> BoundTable:
        shape = None
        meta = {}
        rows = []
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition("=")
                meta[key.strip()] = val.strip()
            elif line.startswith("shape"):
                shape = tuple(float(x) for x in line.split(",")[1:] if x)
            elif line.startswith("lambda"):
                continue
            else:
                a, b = line.split(",")
                rows.append((float(a), float(b)))
        if shape is None:
            raise ArgumentError("missing shape row")
        arr = np.array(rows)
        return cls(shape, arr[:, 0], arr[:, 1], meta.get("provenance", "base"),
                   float(meta.get("tail", "inf")))


def _fmt(x: float) -> str:
    return "inf" if x == math.inf else repr(float(x))


# base tables ----------------------------------------------------------------

def zero_dim_table(grid=None) -> BoundTable:
    """``f(lam) = lam^2`` for ``|lam| <= 1`` and ``inf`` beyond."""
    grid = symmetric_grid() if grid is None else np.asarray(grid, float)
    vals = np.where(np.abs(grid) <= 1.0, grid ** 2, np.inf)
    return BoundTable((), grid, vals, "base", 1.0)


def quadratic_table(shape, coef: float, grid=None) -> BoundTable:
    """``coef * lam^2`` on the whole grid."""
    grid = symmetric_grid() if grid is None else np.asarray(grid, float)
    return BoundTable(tuple(shape), grid, coef * grid ** 2, "base", coef)


def model_table(model, shape, grid=None) -> BoundTable:
    """Exact normalized box CGF of a model, with a certified quadratic tail."""
    from .cgf import cgf_terms
    from .measure import Box, TestFunction

    grid = symmetric_grid() if grid is None else np.asarray(grid, float)
    shape = tuple(float(s) for s in shape)
    vol = float(np.prod(shape))
    terms = cgf_terms(model, TestFunction.indicator(Box([0.0] * len(shape), shape)), 1.0)
    scale = 1.0 / math.sqrt(vol)
    vals = terms(grid * scale)
    lam_min = float(grid[grid > 0][0])
    tail = terms.quadratic_bound(lam_min * scale) * scale ** 2
    return BoundTable(shape, grid, np.maximum(vals, 0.0), "base", tail)


# doubling --------------------------------------------------------------------

def _log_factor(x, power):
    if power == 0:
        return 1.0
    lx = math.log(x) if x > 0 else -math.inf
    return math.inf if lx <= 0 else lx ** -power


def _leak_term(table, leak_table, C_prev, axis, p, lam):
    d = table.dim
    r1 = table.shape[axis]
    others = [s for i, s in enumerate(table.shape) if i != axis]
    q = p / (p - 1.0)
    term = np.full(np.broadcast(p, lam).shape, np.inf)
    if all(s >= C_prev for s in others):
        v = table.volume
        bound = math.sqrt(2.0 * v) * _log_factor(v / r1, d - 1)
        ok = C_prev * np.abs(lam) <= bound / q
        term = np.where(ok, C_prev * q * lam * lam / (2.0 * r1), np.inf)
    if leak_table is not None:
        gen = leak_table.interp(-q * lam / math.sqrt(2.0 * r1)) / q
        term = np.minimum(term, gen)
    return term


def _objective(table, leak_table, C_prev, axis, p, lam):
    main = (2.0 / p) * table.interp(p * lam / math.sqrt(2.0))
    return main + _leak_term(table, leak_table, C_prev, axis, p, lam)


def _optimize_p(fn, lam, n_coarse=40, n_golden=40):
    """Minimize ``fn(p, lam)`` over ``p in (1, 64]`` for every ``lam`` at once.

    Fixed schedule: a log-spaced scan of ``p - 1`` followed by golden-section
    refinement inside the bracket around the best scan point, and the
    fallback ``p = 2``.  Returns the smallest value seen (any ``p`` gives a
    valid bound) and the ``p`` achieving it.
    """
    ps = 1.0 + np.geomspace(1.0 / 512, 63.0, n_coarse)
    vals = fn(ps[:, None], lam[None, :])
    best = np.argmin(vals, axis=0)
    best_val = vals[best, np.arange(len(lam))]
    best_p = ps[best]
    a = ps[np.maximum(best - 1, 0)]
    b = ps[np.minimum(best + 1, n_coarse - 1)]
    c = b - GOLDEN * (b - a)
    e = a + GOLDEN * (b - a)
    fc, fe = fn(c, lam), fn(e, lam)
    for _ in range(n_golden):
        left = fc <= fe
        b = np.where(left, e, b)
        a = np.where(left, a, c)
        new_c = b - GOLDEN * (b - a)
        new_e = a + GOLDEN * (b - a)
        c_next = np.where(left, new_c, e)
        e_next = np.where(left, c, new_e)
        fc_next = np.where(left, fn(new_c, lam), fe)
        fe_next = np.where(left, fc, fn(new_e, lam))
        c, e, fc, fe = c_next, e_next, fc_next, fe_next
    for p_try, v_try in ((c, fc), (e, fe), (np.full_like(lam, 2.0), fn(2.0, lam))):
        better = v_try < best_val
        best_val = np.where(better, v_try, best_val)
        best_p = np.where(better, p_try, best_p)
    return best_val, best_p


def duplication_step(table: BoundTable, leak_table: BoundTable | None = None,
                     p: float | str = "optimize", C_prev: float = 1.0,
                     axis: int = 0) -> BoundTable:
    """Bound for the box with side ``axis`` doubled."""
    if table.dim == 0:
        raise ArgumentError("cannot double a zero-dimensional table")
    if not 0 <= axis < table.dim:
        raise ArgumentError(f"axis {axis} out of range")
    if leak_table is not None and leak_table.shape != tuple(
            s for i, s in enumerate(table.shape) if i != axis):
        raise ArgumentError("leak table shape must be the remaining sides")
    lam = table.lambdas

    def fn(pp, ll):
        return _objective(table, leak_table, C_prev, axis, pp, ll)

    if p == "optimize":
        vals, _ = _optimize_p(fn, lam)
        p_tail = list(1.0 + np.geomspace(1.0 / 512, 63.0, 40)) + [2.0]
    else:
        p = float(p)
        if not p > 1:
            raise ArgumentError("p must exceed 1")
        vals = fn(p, lam)
        p_tail = [p]
    vals = np.where(lam == 0.0, 0.0, vals)
    shape = list(table.shape)
    shape[axis] *= 2.0
    tail = _tail_after_doubling(table, leak_table, C_prev, axis, p_tail)
    return BoundTable(tuple(shape), lam, vals, "propagated", tail)


def _quad_coef(table, x_max):
    """``c`` with ``T(x) <= c x^2`` under interpolation for ``|x| <= x_max``.

    Between grid points the chord of ``c x^2`` exceeds ``c x^2`` by at most
    ``(1 + rho)^2 / (4 rho)`` for grid ratio ``rho``.
    """
    lam, val = table.lambdas, table.values
    if x_max <= table.lam_min:
        return table.tail
    pos = lam[lam > 0]
    if x_max > pos[-1]:
        return math.inf
    top = pos[np.searchsorted(pos, x_max * (1 - 1e-15))]
    mask = (np.abs(lam) <= top) & (lam != 0.0)
    ratios = val[mask] / lam[mask] ** 2
    rho = float(np.max(pos[1:] / pos[:-1])) if len(pos) > 1 else 1.0
    widen = (1.0 + rho) ** 2 / (4.0 * rho)
    return max(table.tail, widen * float(np.max(ratios)))


def _tail_after_doubling(table, leak_table, C_prev, axis, p_choices):
    """Quadratic coefficient valid for ``|lam| <= lam_min`` of the new table,
    minimized over a fixed list of ``p``."""
    lam_min = table.lam_min
    r1 = table.shape[axis]
    best = math.inf
    for p in p_choices:
        q = p / (p - 1.0)
        main = p * _quad_coef(table, p * lam_min / math.sqrt(2.0))
        coef = math.inf
        leak = _leak_term(table, None, C_prev, axis, p, np.array([lam_min, -lam_min]))
        if np.all(np.isfinite(leak)):
            coef = C_prev * q / (2.0 * r1)
        if leak_table is not None:
            coef = min(coef, q / (2.0 * r1) * _quad_coef(leak_table, q * lam_min / math.sqrt(2.0 * r1)))
        best = min(best, main + coef)
    return best


# cascade ---------------------------------------------------------------------

def doubling_order(shape, doublings) -> list[int]:
    """Axes in doubling order: the reverse of repeatedly halving the
    currently largest side (ties to the lowest axis)."""
    sides = [s * 2 ** n for s, n in zip(shape, doublings)]
    left = list(doublings)
    order = []
    while sum(left):
        cand = [i for i in range(len(sides)) if left[i] > 0]
        ax = max(cand, key=lambda i: (sides[i], -i))
        order.append(ax)
        sides[ax] /= 2.0
        left[ax] -= 1
    return order[::-1]


def cascade_delta(a: float, C_prev: float, vol: float, d: int) -> float:
    """Half-width of the range where the doubled tables should stay below ``2 a lam^2``."""
    if d == 1:
        return 1.0 / (C_prev * math.sqrt(a))
    s = vol ** ((d - 1) / d)
    return math.sqrt(s / a) * _log_factor(s, d - 1) / C_prev


@dataclass
class CascadeResult:
    table: BoundTable
    delta: float
    N: int | None
    holds: bool
    steps: list = field(default_factory=list)
    halted_at: int | None = None


def _check_quadratic(table, coef, half_width, tol=TOL):
    lam = table.lambdas
    mask = np.abs(lam) <= half_width
    excess = table.values[mask] - coef * lam[mask] ** 2
    if not len(excess):
        return True, -math.inf
    worst = float(np.max(excess))
    return worst <= tol, worst


def cascade(base: BoundTable, a: float, delta: float, doublings: Sequence[int],
            C_prev: float = 1.0, leak_tables: Callable | None = None, C: float | None = None,
            p: float | str = "optimize") -> CascadeResult:
    """Double ``base`` ``doublings[i]`` times along each axis.

    ``leak_tables`` (optional) maps the tuple of remaining sides to a table
    for the general leak form.  Each step records whether the table stays
    below ``2 a lam^2`` on its ``[-Delta, Delta]``; ``N`` is the first step
    from which that holds for the rest of the path.
    """
    d = base.dim
    if len(doublings) != d or any(int(n) < 0 for n in doublings):
        raise ArgumentError("need one nonnegative doubling count per axis")
    C = max(base.shape) / 2.0 if C is None else float(C)
    if min(base.shape) < C - 1e-12 or max(base.shape) > 2 * C + 1e-12:
        raise ArgumentError(f"base shape {base.shape} is not inside [C, 2C]^d for C={C}")
    if a < C / base.volume ** (1.0 / d) - 1e-12:
        raise ArgumentError("a must be at least C / R(volume)")
    ok, worst = _check_quadratic(base, a, delta)
    if not ok:
        raise ArgumentError(f"base exceeds a*lam^2 on [-delta, delta] by {worst:.3g}")
    table = base
    delta0 = cascade_delta(a, C_prev, base.volume, d)
    ok0, worst0 = _check_quadratic(base, 2 * a, delta0)
    steps = [{"step": 0, "shape": base.shape, "delta": delta0, "holds": ok0, "excess": worst0}]
    halted = None
    for j, ax in enumerate(doubling_order(base.shape, doublings), start=1):
        others = tuple(s for i, s in enumerate(table.shape) if i != ax)
        leak = leak_tables(others) if leak_tables is not None else None
        if d > 1 and leak is None and min(others) < C_prev:
            halted = j
            break
        table = duplication_step(table, leak, p, C_prev, ax)
        dlt = cascade_delta(a, C_prev, table.volume, d)
        ok_j, worst_j = _check_quadratic(table, 2 * a, dlt)
        steps.append({"step": j, "shape": table.shape, "delta": dlt, "holds": ok_j,
                      "excess": worst_j})
    N = None
    for j in range(len(steps) - 1, -1, -1):
        if not steps[j]["holds"]:
            break
        N = steps[j]["step"]
    final = steps[-1]
    return CascadeResult(table, final["delta"], N, final["holds"] and halted is None, steps,
                         halted)


def envelope_recursion(a0: float, C_prev: float, r0: float, steps: int) -> np.ndarray:
    """Quadratic coefficients ``a_n`` of a 1-d doubling chain with the
    optimal ``p = 1 + sqrt(b/a)``: ``sqrt a_{n+1} = sqrt a_n + sqrt b_n``
    with ``b_n = C_prev / (2 r0 2^n)``."""
    out = np.empty(steps + 1)
    out[0] = a0
    root = math.sqrt(a0)
    for n in range(steps):
        root += math.sqrt(C_prev / (2.0 * r0 * 2.0 ** n))
        out[n + 1] = root * root
    return out


def pure_leak_constant(C_prev: float, r0: float) -> float:
    """Limit of the envelope chain from a zero base (closed-form geometric sum)."""
    return C_prev / (2.0 * r0) / (1.0 - 2.0 ** -0.5) ** 2


# shape supremum and constants ---------------------------------------------------

def sup_over_shapes(tables: Sequence[BoundTable], C: float) -> BoundTable:
    """Pointwise maximum over a finite family of equal-volume shapes."""
    tables = list(tables)
    if not tables:
        raise ArgumentError("need at least one table")
    vol = tables[0].volume
    for t in tables:
        if not math.isclose(t.volume, vol, rel_tol=1e-12):
            raise ArgumentError("tables have different volumes")
        if min(t.shape) < C:
            raise ArgumentError(f"shape {t.shape} has a side below C={C}")
        if not np.array_equal(t.lambdas, tables[0].lambdas):
            raise ArgumentError("tables use different grids")
    vals = np.max(np.stack([t.values for t in tables]), axis=0)
    tail = max(t.tail for t in tables)
    return BoundTable(tables[0].shape, tables[0].lambdas, vals, "sup", tail)


@dataclass
class ConditionReport:
    condition: str
    holds: bool
    witness: dict
    margin: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class SearchBudget:
    k_min: int = 1
    k_max: int = 8
    n_max: int = 6
    base_sides: tuple = (1.0, 1.5)
    ratio: float = 2 ** 0.25
    headroom: float = 8.0
    lam_floor: float = 1e-7


def _region_bound(C, vol, d):
    lv = math.log(vol)
    if lv <= 0:
        return math.inf
    return math.sqrt(vol) / lv ** d / C


def _table_dp(base, n_max, C_prev, d):
    """Tables for every doubling vector in ``{0..n_max}^d`` from one base."""
    import itertools

    tables = {(0,) * d: base}
    vectors = sorted(itertools.product(range(n_max + 1), repeat=d), key=sum)
    for n in vectors:
        if sum(n) == 0:
            continue
        order = doubling_order(base.shape, n)
        last = order[-1]
        prev = list(n)
        prev[last] -= 1
        tables[n] = duplication_step(tables[tuple(prev)], None, "optimize", C_prev, last)
    return tables


def derive_Cd(base_family: Callable, C_prev: float, dim: int,
              budget: SearchBudget = SearchBudget(), tol: float = TOL) -> ConditionReport:
    """Search ``C in {2^k}`` for a constant with ``f <= C lam^2`` on the region
    ``C |lam| <= sqrt(v) / log^d v`` over shapes ``s * 2^n`` with ``s`` in
    ``[C, 2C)^d`` and ``n <= n_max`` per axis.

    ``base_family(shape, grid)`` must return a certified table for shapes with
    every side in ``[C, 2C)``.
    """
    import itertools

    last = None
    for k in range(budget.k_min, budget.k_max + 1):
        C = 2.0 ** k
        if C < C_prev:
            continue
        bases = list(itertools.product([C * s for s in budget.base_sides], repeat=dim))
        vol_max = max(np.prod(b) for b in bases) * 2.0 ** (dim * budget.n_max)
        reach = max(_region_bound(C, float(np.prod(b)) * 2.0 ** (dim * n), dim)
                    for b in bases for n in range(budget.n_max + 1))
        reach = max(reach, _region_bound(C, vol_max, dim))
        # doubled tables read earlier tables at up to ~p/sqrt(2) times larger
        # lambda, so the grid extends past the checked region
        top = max(reach, 1.0) * budget.headroom
        lam_top = budget.ratio ** math.ceil(math.log(top) / math.log(budget.ratio))
        n_pos = math.ceil(math.log(lam_top / budget.lam_floor) / math.log(budget.ratio)) + 1
        grid = symmetric_grid(lam_top, n_pos, budget.ratio)
        margin = math.inf
        worst = None
        points = 0
        for b in bases:
            tables = _table_dp(base_family(b, grid), budget.n_max, C_prev, dim)
            for n, t in tables.items():
                vol = t.volume
                bound = _region_bound(C, vol, dim)
                lam = t.lambdas
                mask = (lam != 0.0) & (np.abs(lam) <= bound)
                if min(t.shape) < C or not mask.any():
                    continue
                gap = C * lam[mask] ** 2 - t.values[mask]
                points += int(mask.sum())
                i = int(np.argmin(gap))
                if gap[i] < margin:
                    margin = float(gap[i])
                    worst = {"shape": t.shape, "lambda": float(lam[mask][i]),
                             "value": float(t.values[mask][i]),
                             "bound": float(C * lam[mask][i] ** 2)}
        last = {"C_d": C, "region_points": points, "worst": worst}
        if margin >= -tol and points > 0:
            return ConditionReport("B_d", True, last, margin)
    return ConditionReport("B_d", False, last or {}, -math.inf)


def check_A0(table: BoundTable, tol: float = TOL) -> ConditionReport:
    """Largest grid ``eps > 0`` with ``eps^2 T(lam) <= lam^2`` on ``|lam| <= eps``."""
    lam, val = table.lambdas, table.values
    pos = lam[lam > 0]
    best = 0.0
    witness = None
    for eps in pos:
        mask = (np.abs(lam) <= eps) & (lam != 0.0)
        excess = eps * eps * val[mask] - lam[mask] ** 2
        if np.all(excess <= tol * np.maximum(1.0, lam[mask] ** 2)):
            best = float(eps)
        else:
            i = int(np.argmax(excess))
            witness = {"eps": float(eps), "lambda": float(lam[mask][i]),
                       "excess": float(excess[i])}
            break
    holds = best > 0
    return ConditionReport("A0", holds, {"eps": best} if holds else (witness or {}), best)


def epsilon_from_quarter_bound(table: BoundTable, tol: float = TOL,
                               refine: int = 200) -> ConditionReport:
    """Largest ``eps`` with ``T(+-eps) <= log(5/4)``, then check
    ``eps^2 T(lam) <= lam^2`` on the grid inside ``[-eps, eps]``.

    The grid bracket is refined by bisection on the chord interpolant, so
    the returned ``eps`` never exceeds what the table certifies.
    """
    limit = math.log(1.25)
    pos = table.lambdas[table.lambdas > 0]

    def ok(e):
        return max(table.interp(e), table.interp(-e)) <= limit

    good = [e for e in pos if ok(e)]
    if not good:
        return ConditionReport("A_eps", False, {"reason": "no grid eps with f(+-eps) <= log 5/4"},
                               -math.inf)
    lo = max(good)
    above = pos[pos > lo]
    if len(above):
        hi = float(above[0])
        for _ in range(refine):
            mid = 0.5 * (lo + hi)
            if ok(mid):
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-15 * hi:
                break
    eps = float(lo)
    lam, val = table.lambdas, table.values
    mask = (np.abs(lam) <= eps) & (lam != 0.0)
    excess = eps * eps * val[mask] - lam[mask] ** 2
    worst = float(np.max(excess)) if mask.any() else -math.inf
    holds = worst <= tol
    return ConditionReport("A_eps", holds, {"eps": eps, "worst_excess": worst}, -worst)


def check_permutation_symmetry(tables: Mapping[tuple, BoundTable],
                               tol: float = TOL) -> ConditionReport:
    """Tables of shapes that are permutations of each other must agree."""
    keys = list(tables)
    worst = 0.0
    witness = {}
    compared = 0
    for i, a in enumerate(keys):
        for b in keys[i:]:
            if sorted(a) != sorted(b):
                continue
            ta, tb = tables[a], tables[b]
            va, vb = ta.values, tb.values
            both_inf = np.isinf(va) & np.isinf(vb)
            with np.errstate(invalid="ignore"):
                diff = np.where(both_inf, 0.0, np.abs(va - vb))
            diff = np.where(np.isnan(diff), np.inf, diff)
            scale = np.where(both_inf, 1.0, np.maximum(1.0, np.abs(va)))
            rel = diff / scale
            compared += 1
            j = int(np.argmax(rel))
            if rel[j] > worst:
                worst = float(rel[j])
                witness = {"shapes": [list(a), list(b)], "lambda": float(ta.lambdas[j]),
                           "values": [float(va[j]), float(vb[j])]}
    holds = worst <= tol
    return ConditionReport("A_perm", holds, witness if not holds else {"pairs": compared},
                           -worst)
