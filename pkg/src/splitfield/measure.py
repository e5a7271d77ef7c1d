"""Realized signed measures made of atoms and piecewise-constant cells.

A :class:`SampleMeasure` is one draw of a random field restricted to a
bounded window.  All boxes are half-open, ``[lower, upper)`` on every axis.
Arrays are canonicalized on construction (sorted, duplicates merged, zeros
dropped) and frozen, so identical pieces of two measures cancel exactly
when the measures are subtracted.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .errors import ArgumentError, SupportError


def _frozen(a):
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Box:
    """Half-open box ``[lower, upper)``; infinite coordinates are allowed."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(x) for x in np.atleast_1d(self.lower))
        hi = tuple(float(x) for x in np.atleast_1d(self.upper))
        if len(lo) != len(hi) or len(lo) == 0:
            raise ArgumentError("box corners must have the same positive length")
        if any(np.isnan(lo + hi)):
            raise ArgumentError("box corners must not be NaN")
        if not all(a < b for a, b in zip(lo, hi)):
            raise ArgumentError(f"box needs lower < upper on every axis, got {lo}, {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.upper, self.lower)))

    @property
    def bounded(self) -> bool:
        return bool(np.all(np.isfinite(self.lower + self.upper)))

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.lower)

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.upper)

    def contains_box(self, other: Box) -> bool:
        return all(a <= c for a, c in zip(self.lower, other.lower)) and all(
            b >= e for b, e in zip(self.upper, other.upper)
        )

    def intersect(self, other: Box) -> Box | None:
        lo = np.maximum(self.lo, other.lo)
        hi = np.minimum(self.hi, other.hi)
        if np.all(lo < hi):
            return Box(lo, hi)
        return None

    def scaled(self, r) -> Box:
        r = np.broadcast_to(np.asarray(r, dtype=float), (self.dim,))
        return Box(self.lo * r, self.hi * r)

    def __eq__(self, other):
        return isinstance(other, Box) and self.lower == other.lower and self.upper == other.upper

    def __hash__(self):
        return hash((self.lower, self.upper))

    def __repr__(self):
        return f"Box({list(self.lower)}, {list(self.upper)})"


def bounding_box(boxes: Iterable[Box]) -> Box:
    boxes = list(boxes)
    lo = np.min([b.lo for b in boxes], axis=0)
    hi = np.max([b.hi for b in boxes], axis=0)
    return Box(lo, hi)


def box_difference(a: Box, b: Box) -> list[Box]:
    """Disjoint boxes covering ``a`` minus ``b``."""
    inter = a.intersect(b)
    if inter is None:
        return [a]
    out = []
    lo, hi = list(a.lower), list(a.upper)
    for ax in range(a.dim):
        if lo[ax] < inter.lower[ax]:
            piece_hi = list(hi)
            piece_hi[ax] = inter.lower[ax]
            out.append(Box(lo, piece_hi))
        if inter.upper[ax] < hi[ax]:
            piece_lo = list(lo)
            piece_lo[ax] = inter.upper[ax]
            out.append(Box(piece_lo, hi))
        lo[ax], hi[ax] = inter.lower[ax], inter.upper[ax]
    return out


def _check_dim(dim, box):
    if box.dim != dim:
        raise ArgumentError(f"box has dimension {box.dim}, measure has {dim}")


@dataclass(frozen=True, eq=False)
class SampleMeasure:
    """Signed measure: weighted atoms plus constant densities on boxes.

    Build instances with :meth:`build`, which canonicalizes the arrays.
    Cells may overlap; densities then add.
    """

    dim: int
    points: np.ndarray
    weights: np.ndarray
    cell_lo: np.ndarray
    cell_hi: np.ndarray
    densities: np.ndarray
    window: Box

    @classmethod
    def build(cls, dim, window, points=None, weights=None, cell_lo=None, cell_hi=None,
              densities=None, check=True) -> SampleMeasure:
        dim = int(dim)
        if dim < 1:
            raise ArgumentError("dimension must be positive")
        _check_dim(dim, window)
        if not window.bounded:
            raise ArgumentError("window must be bounded")
        pts = np.zeros((0, dim)) if points is None else np.asarray(points, float).reshape(-1, dim)
        w = np.zeros(0) if weights is None else np.asarray(weights, float).reshape(-1)
        clo = np.zeros((0, dim)) if cell_lo is None else np.asarray(cell_lo, float).reshape(-1, dim)
        chi = np.zeros((0, dim)) if cell_hi is None else np.asarray(cell_hi, float).reshape(-1, dim)
        dens = np.zeros(0) if densities is None else np.asarray(densities, float).reshape(-1)
        if len(pts) != len(w) or not (len(clo) == len(chi) == len(dens)):
            raise ArgumentError("atom or cell arrays have mismatched lengths")
        if check:
            if len(pts) and (np.any(pts < window.lo) or np.any(pts >= window.hi)):
                raise ArgumentError("atoms must lie inside the window")
            if len(clo) and (np.any(clo < window.lo) or np.any(chi > window.hi)):
                raise ArgumentError("cells must lie inside the window")
        pts, w = _merge_atoms(pts, w)
        clo, chi, dens = _merge_cells(clo, chi, dens)
        return cls(dim, _frozen(pts), _frozen(w), _frozen(clo), _frozen(chi), _frozen(dens), window)

    @classmethod
    def zero(cls, window: Box) -> SampleMeasure:
        return cls.build(window.dim, window)

    @property
    def n_atoms(self) -> int:
        return len(self.weights)

    @property
    def n_cells(self) -> int:
        return len(self.densities)

    def to_json(self) -> str:
        """Debug dump: ``{dim, window, atoms:[[x..., w]], cells:[[lo..., hi..., rho]]}``."""
        doc = {
            "dim": self.dim,
            "window": [list(self.window.lower), list(self.window.upper)],
            "atoms": [list(p) + [w] for p, w in zip(self.points.tolist(), self.weights.tolist())],
            "cells": [
                lo + hi + [rho]
                for lo, hi, rho in zip(
                    self.cell_lo.tolist(), self.cell_hi.tolist(), self.densities.tolist()
                )
            ],
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> SampleMeasure:
        doc = json.loads(text)
        d = int(doc["dim"])
        atoms = np.asarray(doc.get("atoms", []), float).reshape(-1, d + 1)
        cells = np.asarray(doc.get("cells", []), float).reshape(-1, 2 * d + 1)
        if "window" in doc:
            window = Box(*doc["window"])
        else:
            corners = [atoms[:, :d], atoms[:, :d] + 1.0, cells[:, :d], cells[:, d:2 * d]]
            allpts = np.vstack([c for c in corners if len(c)])
            window = Box(allpts.min(axis=0), allpts.max(axis=0))
        return cls.build(d, window, atoms[:, :d], atoms[:, d], cells[:, :d], cells[:, d:2 * d],
                         cells[:, 2 * d])


def _merge_atoms(pts, w):
    if len(w) == 0:
        return pts, w
    keys = (w,) + tuple(pts[:, a] for a in range(pts.shape[1] - 1, -1, -1))
    order = np.lexsort(keys)
    pts, w = pts[order], w[order]
    new = np.ones(len(w), bool)
    new[1:] = np.any(pts[1:] != pts[:-1], axis=1)
    starts = np.flatnonzero(new)
    w = np.add.reduceat(w, starts)
    pts = pts[starts]
    keep = w != 0.0
    return pts[keep], w[keep]


def _merge_cells(lo, hi, dens):
    if len(dens) == 0:
        return lo, hi, dens
    nonempty = np.all(hi > lo, axis=1) & (dens != 0.0)
    lo, hi, dens = lo[nonempty], hi[nonempty], dens[nonempty]
    if len(dens) == 0:
        return lo, hi, dens
    d = lo.shape[1]
    cols = [hi[:, a] for a in range(d - 1, -1, -1)] + [lo[:, a] for a in range(d - 1, -1, -1)]
    order = np.lexsort(cols)
    lo, hi, dens = lo[order], hi[order], dens[order]
    new = np.ones(len(dens), bool)
    new[1:] = np.any(lo[1:] != lo[:-1], axis=1) | np.any(hi[1:] != hi[:-1], axis=1)
    starts = np.flatnonzero(new)
    dens = np.add.reduceat(dens, starts)
    lo, hi = lo[starts], hi[starts]
    keep = dens != 0.0
    return lo[keep], hi[keep], dens[keep]


# integration ---------------------------------------------------------------

def integrate_boxes(m: SampleMeasure, lo, hi) -> np.ndarray:
    """Integrals of ``m`` over many boxes given as corner arrays."""
    lo = np.asarray(lo, float).reshape(-1, m.dim)
    hi = np.asarray(hi, float).reshape(-1, m.dim)
    total = kernels.atoms_in_boxes(m.points, m.weights, lo, hi)
    total = total + kernels.cells_in_boxes(m.cell_lo, m.cell_hi, m.densities, lo, hi)
    return total


def integrate_box(m: SampleMeasure, b: Box) -> float:
    _check_dim(m.dim, b)
    return float(integrate_boxes(m, b.lo, b.hi)[0])


def integrate_scaled(m: SampleMeasure, phi: TestFunction, r) -> float:
    """Integral of ``t -> phi(t / r)`` against ``m``; ``r`` scalar or per-axis."""
    if phi.dim != m.dim:
        raise ArgumentError(f"test function has dimension {phi.dim}, measure has {m.dim}")
    lo, hi = phi.scaled_corners(r)
    if len(lo) == 0:
        return 0.0
    support = Box(lo.min(axis=0), hi.max(axis=0))
    if not m.window.contains_box(support):
        raise SupportError(f"scaled support {support} is not inside window {m.window}")
    return float(integrate_boxes(m, lo, hi) @ phi.values)


def variation_box(m: SampleMeasure, b: Box) -> float:
    """Total variation of ``m`` on ``b``, exact even when cells overlap."""
    _check_dim(m.dim, b)
    lo, hi = b.lo, b.hi
    atom_part = 0.0
    if m.n_atoms:
        inside = np.all((m.points >= lo) & (m.points < hi), axis=1)
        atom_part = float(np.abs(m.weights[inside]).sum())
    if m.n_cells == 0:
        return atom_part
    clo = np.maximum(m.cell_lo, lo)
    chi = np.minimum(m.cell_hi, hi)
    hit = np.all(chi > clo, axis=1)
    return atom_part + _abs_integral(clo[hit], chi[hit], m.densities[hit])


def _abs_integral(lo, hi, dens) -> float:
    """Integral of |sum of cell densities| by sweeping slabs along axis 0."""
    if len(dens) == 0:
        return 0.0
    if len(dens) == 1:
        return float(abs(dens[0]) * np.prod(hi[0] - lo[0]))
    if lo.shape[1] == 1:
        edges = np.concatenate([lo[:, 0], hi[:, 0]])
        jumps = np.concatenate([dens, -dens])
        order = np.argsort(edges, kind="stable")
        edges, jumps = edges[order], jumps[order]
        level = np.cumsum(jumps)[:-1]
        return float(np.sum(np.abs(level) * np.diff(edges)))
    cuts = np.unique(np.concatenate([lo[:, 0], hi[:, 0]]))
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        active = (lo[:, 0] <= a) & (hi[:, 0] >= b)
        if active.any():
            total += (b - a) * _abs_integral(lo[active, 1:], hi[active, 1:], dens[active])
    return total


# transforms ----------------------------------------------------------------

def multiply_by_function(m: SampleMeasure, phi: TestFunction) -> SampleMeasure:
    """The measure ``phi * m``."""
    if phi.dim != m.dim:
        raise ArgumentError(f"test function has dimension {phi.dim}, measure has {m.dim}")
    w = m.weights * kernels.step_eval(m.points, phi.lo, phi.hi, phi.values)
    lo = np.maximum(m.cell_lo[:, None, :], phi.lo[None])
    hi = np.minimum(m.cell_hi[:, None, :], phi.hi[None])
    dens = m.densities[:, None] * phi.values[None, :]
    ok = np.all(hi > lo, axis=2)
    return SampleMeasure.build(m.dim, m.window, m.points, w, lo[ok], hi[ok], dens[ok], check=False)


def restrict(m: SampleMeasure, b: Box) -> SampleMeasure:
    """The measure restricted to ``b`` (window unchanged)."""
    clipped = m.window.intersect(b)
    if clipped is None:
        return SampleMeasure.zero(m.window)
    return multiply_by_function(m, TestFunction.indicator(clipped))


def inverse_isometry(perm: Sequence[int], shift) -> tuple[list[int], np.ndarray]:
    """Parameters of the inverse of ``t -> (t[perm[i]] + shift[i])_i``."""
    perm = list(perm)
    shift = np.asarray(shift, float)
    inv = [0] * len(perm)
    for i, p in enumerate(perm):
        inv[p] = i
    inv_shift = np.empty_like(shift)
    inv_shift[perm] = -shift
    return inv, inv_shift


def _map_coords(x, perm, shift):
    # preimage under t -> (t[perm[i]] + shift[i])_i
    u = np.empty_like(x)
    u[:, perm] = x - shift
    return u


def apply_isometry(m: SampleMeasure, perm: Sequence[int], shift) -> SampleMeasure:
    """Composition of ``m`` with the isometry ``a(t) = (t[perm[i]] + shift[i])_i``.

    The result integrates over ``B`` as ``m`` integrates over ``a(B)``,
    so points and cells move by the inverse map.
    """
    perm = [int(p) for p in perm]
    if sorted(perm) != list(range(m.dim)):
        raise ArgumentError(f"{perm} is not a permutation of the axes")
    shift = np.broadcast_to(np.asarray(shift, float), (m.dim,))
    wlo = _map_coords(m.window.lo[None], perm, shift)[0]
    whi = _map_coords(m.window.hi[None], perm, shift)[0]
    return SampleMeasure.build(
        m.dim, Box(wlo, whi),
        _map_coords(m.points, perm, shift), m.weights,
        _map_coords(m.cell_lo, perm, shift), _map_coords(m.cell_hi, perm, shift), m.densities,
        check=False,
    )


def marginalize(m: SampleMeasure, kept_axes: Sequence[int], b: Box) -> SampleMeasure:
    """The measure ``A -> m(A x b)`` on the kept axes.

    ``b`` ranges over the dropped axes in increasing axis order.
    """
    kept = [int(a) for a in kept_axes]
    dropped = [a for a in range(m.dim) if a not in kept]
    if not kept or len(set(kept)) != len(kept) or any(a < 0 or a >= m.dim for a in kept):
        raise ArgumentError("kept_axes must be a nonempty list of distinct axes")
    if not dropped:
        raise ArgumentError("at least one axis must be dropped")
    if b.dim != len(dropped):
        raise ArgumentError(f"box over dropped axes needs dimension {len(dropped)}")
    if not b.bounded:
        raise ArgumentError("cross-section box must be bounded")
    inside = np.all((m.points[:, dropped] >= b.lo) & (m.points[:, dropped] < b.hi), axis=1)
    section = np.prod(
        np.clip(np.minimum(m.cell_hi[:, dropped], b.hi) - np.maximum(m.cell_lo[:, dropped], b.lo),
                0.0, None),
        axis=1,
    )
    hit = section > 0
    window = Box(m.window.lo[kept], m.window.hi[kept])
    return SampleMeasure.build(
        len(kept), window, m.points[inside][:, kept], m.weights[inside],
        m.cell_lo[hit][:, kept], m.cell_hi[hit][:, kept], m.densities[hit] * section[hit],
        check=False,
    )


def combine(a: SampleMeasure, b: SampleMeasure, ca: float, cb: float) -> SampleMeasure:
    """The measure ``ca * a + cb * b`` on the bounding box of both windows."""
    if a.dim != b.dim:
        raise ArgumentError("measures have different dimensions")
    window = bounding_box([a.window, b.window])
    return SampleMeasure.build(
        a.dim, window,
        np.vstack([a.points, b.points]), np.concatenate([ca * a.weights, cb * b.weights]),
        np.vstack([a.cell_lo, b.cell_lo]), np.vstack([a.cell_hi, b.cell_hi]),
        np.concatenate([ca * a.densities, cb * b.densities]),
        check=False,
    )


# test functions --------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TestFunction:
    """Step function given by disjoint boxes and their values.

    ``sup_error`` bounds the sup-norm distance to a continuous target when
    the step function approximates one; it is 0 for exact step functions.
    """

    __test__ = False  # not a pytest class

    pieces: tuple
    sup_error: float = 0.0
    _check: bool = field(default=True, repr=False)

    def __post_init__(self):
        pieces = tuple((p[0], float(p[1])) for p in self.pieces)
        if not pieces:
            raise ArgumentError("a test function needs at least one piece")
        dims = {b.dim for b, _ in pieces}
        if len(dims) != 1:
            raise ArgumentError("pieces have mixed dimensions")
        if not all(b.bounded for b, _ in pieces):
            raise ArgumentError("pieces must be bounded")
        if not (self.sup_error >= 0.0):
            raise ArgumentError("sup_error must be nonnegative")
        object.__setattr__(self, "pieces", pieces)
        if self._check:
            _check_disjoint(self.lo, self.hi)

    @classmethod
    def indicator(cls, box: Box, value: float = 1.0) -> TestFunction:
        return cls(((box, value),))

    @classmethod
    def from_arrays(cls, lo, hi, values, sup_error=0.0, check=True) -> TestFunction:
        pieces = tuple((Box(a, b), v) for a, b, v in zip(lo, hi, values))
        return cls(pieces, sup_error, check)

    @property
    def dim(self) -> int:
        return self.pieces[0][0].dim

    @cached_property
    def lo(self) -> np.ndarray:
        return _frozen([b.lower for b, _ in self.pieces])

    @cached_property
    def hi(self) -> np.ndarray:
        return _frozen([b.upper for b, _ in self.pieces])

    @cached_property
    def values(self) -> np.ndarray:
        return _frozen([v for _, v in self.pieces])

    @cached_property
    def volumes(self) -> np.ndarray:
        return _frozen(np.prod(self.hi - self.lo, axis=1))

    @property
    def support(self) -> Box:
        return Box(self.lo.min(axis=0), self.hi.max(axis=0))

    @property
    def l2_norm_sq(self) -> float:
        return float(np.sum(self.values ** 2 * self.volumes))

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def scaled_corners(self, r):
        r = np.broadcast_to(np.asarray(r, dtype=float), (self.dim,))
        if np.any(r <= 0):
            raise ArgumentError("scale must be positive")
        return self.lo * r, self.hi * r

    def __call__(self, points) -> np.ndarray:
        pts = np.asarray(points, float).reshape(-1, self.dim)
        return kernels.step_eval(pts, self.lo, self.hi, self.values)

    def scale_values(self, c: float) -> TestFunction:
        return TestFunction(tuple((b, c * v) for b, v in self.pieces),
                            abs(c) * self.sup_error, False)

    def to_dict(self) -> dict:
        return {
            "pieces": [{"lower": list(b.lower), "upper": list(b.upper), "value": v}
                       for b, v in self.pieces],
            "sup_error": self.sup_error,
        }


def _check_disjoint(lo, hi):
    n = len(lo)
    step = max(1, (1 << 20) // max(1, n))
    for start in range(0, n, step):
        sl = slice(start, min(n, start + step))
        overlap = np.all(
            (np.minimum(hi[sl, None], hi[None]) > np.maximum(lo[sl, None], lo[None])), axis=2
        )
        idx = np.arange(sl.start, sl.stop)
        overlap[np.arange(len(idx)), idx] = False
        if overlap.any():
            i, j = np.argwhere(overlap)[0]
            raise ArgumentError(f"pieces {idx[i]} and {j} overlap")
