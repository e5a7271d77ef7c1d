import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from splitfield import ArgumentError, SupportError
from splitfield.fields import CenteredPoisson, sample
from splitfield.measure import (
    Box,
    SampleMeasure,
    TestFunction,
    apply_isometry,
    box_difference,
    combine,
    integrate_box,
    integrate_scaled,
    inverse_isometry,
    marginalize,
    multiply_by_function,
    restrict,
    variation_box,
)


# strategies ------------------------------------------------------------------

coord = st.integers(-8, 8).map(lambda k: k / 2.0)


@st.composite
def boxes(draw, d, lo=-4.0, hi=4.0):
    a = [draw(st.floats(lo, hi - 0.25, allow_nan=False)) for _ in range(d)]
    b = [x + draw(st.floats(0.25, 3.0)) for x in a]
    return Box(a, b)


@st.composite
def measures(draw, d):
    window = Box([-5.0] * d, [5.0] * d)
    n_atoms = draw(st.integers(0, 6))
    pts = [[draw(st.floats(-5.0, 4.99)) for _ in range(d)] for _ in range(n_atoms)]
    w = [draw(st.floats(-3, 3)) for _ in range(n_atoms)]
    n_cells = draw(st.integers(0, 4))
    cl, ch, dens = [], [], []
    for _ in range(n_cells):
        a = [draw(st.floats(-5.0, 3.0)) for _ in range(d)]
        b = [min(5.0, x + draw(st.floats(0.1, 3.0))) for x in a]
        cl.append(a)
        ch.append(b)
        dens.append(draw(st.floats(-2, 2)))
    return SampleMeasure.build(d, window, pts, w, cl, ch, dens)


def _close(a, b, rel=1e-12):
    return abs(a - b) <= rel * max(1.0, abs(a), abs(b))


# Box ---------------------------------------------------------------------------

def test_box_rejects_empty():
    with pytest.raises(ArgumentError):
        Box([0.0], [0.0])
    with pytest.raises(ArgumentError):
        Box([0.0, 1.0], [1.0])


def test_box_difference_partitions():
    a = Box([0.0, 0.0], [4.0, 4.0])
    b = Box([1.0, 1.0], [2.0, 3.0])
    parts = box_difference(a, b)
    assert math.isclose(sum(p.volume for p in parts), a.volume - b.volume)
    assert all(p.intersect(b) is None for p in parts)


# integrate_box -------------------------------------------------------------------

def test_integrate_empty_measure():
    m = SampleMeasure.zero(Box([0.0], [3.0]))
    assert integrate_box(m, Box([0.0], [1.0])) == 0.0


def test_integrate_atom_plus_cell():
    m = SampleMeasure.build(1, Box([0.0], [1.0]), [[0.5]], [2.0], [[0.0]], [[1.0]], [-1.0])
    assert integrate_box(m, Box([0.0], [1.0])) == 1.0


def test_poisson_sample_integral_is_count_minus_length():
    r = 7.0
    m = sample(CenteredPoisson(), Box([0.0], [r]), seed=11)
    assert integrate_box(m, Box([0.0], [r])) == pytest.approx(m.n_atoms - r, abs=1e-12)
    assert variation_box(m, Box([0.0], [1.0])) == pytest.approx(
        np.sum(m.points[:, 0] < 1.0) + 1.0, abs=1e-12)


def test_dimension_mismatch():
    m = SampleMeasure.zero(Box([0.0], [1.0]))
    with pytest.raises(ArgumentError):
        integrate_box(m, Box([0.0, 0.0], [1.0, 1.0]))


def test_half_open_atom_rule():
    m = SampleMeasure.build(1, Box([0.0], [2.0]), [[1.0]], [1.0])
    assert integrate_box(m, Box([0.0], [1.0])) == 0.0
    assert integrate_box(m, Box([1.0], [2.0])) == 1.0


def test_overlapping_cells_add():
    m = SampleMeasure.build(1, Box([0.0], [3.0]), cell_lo=[[0.0], [1.0]], cell_hi=[[2.0], [3.0]],
                            densities=[1.0, -1.0])
    assert integrate_box(m, Box([1.0], [2.0])) == 0.0
    assert variation_box(m, Box([0.0], [3.0])) == 2.0


def test_identical_atoms_merge_and_cancel():
    m = SampleMeasure.build(1, Box([0.0], [2.0]), [[0.5], [0.5]], [1.0, -1.0])
    assert m.n_atoms == 0


# integrate_scaled ---------------------------------------------------------------------

def test_scaled_indicator_reduces_to_box():
    m = sample(CenteredPoisson(), Box([0.0], [2.0]), seed=3)
    phi = TestFunction.indicator(Box([0.0], [1.0]))
    assert integrate_scaled(m, phi, 1.0) == integrate_box(m, Box([0.0], [1.0]))


def test_scaled_antisymmetric_against_lebesgue():
    m = SampleMeasure.build(1, Box([0.0], [4.0]), cell_lo=[[0.0]], cell_hi=[[4.0]],
                            densities=[1.0])
    phi = TestFunction.from_arrays([[0.0], [1.0]], [[1.0], [2.0]], [1.0, -1.0])
    assert integrate_scaled(m, phi, 2.0) == 0.0


def test_scaled_support_error():
    m = SampleMeasure.zero(Box([0.0], [1.0]))
    with pytest.raises(SupportError):
        integrate_scaled(m, TestFunction.indicator(Box([0.0], [1.0])), 2.0)


def test_scaled_matches_riemann_sum(gen):
    # random cell measure without atoms; midpoint sum on a grid fine enough to
    # resolve every breakpoint exactly (all edges are multiples of 1/8)
    lo = gen.integers(0, 24, (6, 1)) / 8.0
    hi = lo + gen.integers(1, 8, (6, 1)) / 8.0
    dens = gen.normal(size=6)
    m = SampleMeasure.build(1, Box([0.0], [4.0]), cell_lo=lo, cell_hi=hi, densities=dens)
    phi = TestFunction.from_arrays([[0.0], [0.75]], [[0.75], [1.5]], [0.3, -1.2])
    r = 2.0
    h = 1.0 / 1024
    t = (np.arange(int(4.0 / h)) + 0.5) * h
    density = ((t[:, None] >= lo[:, 0]) & (t[:, None] < hi[:, 0])) @ dens
    ref = float(np.sum(phi(t[:, None] / r) * density) * h)
    assert abs(integrate_scaled(m, phi, r) - ref) <= 1e-10


def test_anisotropic_scale():
    m = SampleMeasure.build(2, Box([0.0, 0.0], [4.0, 4.0]), cell_lo=[[0.0, 0.0]],
                            cell_hi=[[4.0, 4.0]], densities=[1.0])
    phi = TestFunction.indicator(Box([0.0, 0.0], [1.0, 1.0]))
    assert integrate_scaled(m, phi, (2.0, 4.0)) == 8.0


# variation ------------------------------------------------------------------------------

def test_variation_simple():
    w = Box([0.0], [2.0])
    assert variation_box(SampleMeasure.zero(w), w) == 0.0
    m = SampleMeasure.build(1, w, [[1.0]], [-3.0])
    assert variation_box(m, w) == 3.0


def test_variation_overlapping_cells_2d():
    m = SampleMeasure.build(2, Box([0.0, 0.0], [3.0, 3.0]),
                            cell_lo=[[0.0, 0.0], [1.0, 1.0]], cell_hi=[[2.0, 2.0], [3.0, 3.0]],
                            densities=[1.0, -1.0])
    # the unit overlap cancels; the rest has |density| 1
    assert variation_box(m, Box([0.0, 0.0], [3.0, 3.0])) == pytest.approx(6.0, abs=1e-12)


# transforms -------------------------------------------------------------------------

def test_multiply_identity_and_indicator(gen):
    m = sample(CenteredPoisson(), Box([0.0], [6.0]), seed=5)
    one = TestFunction.indicator(Box([0.0], [6.0]))
    same = multiply_by_function(m, one)
    for _ in range(20):
        a = gen.uniform(0, 5)
        b = Box([a], [a + gen.uniform(0.1, 1.0)])
        assert integrate_box(same, b) == pytest.approx(integrate_box(m, b), abs=1e-12)
    B = Box([1.0], [3.5])
    rb = restrict(m, B)
    A = Box([2.0], [5.0])
    assert integrate_box(rb, A) == pytest.approx(integrate_box(m, A.intersect(B)), abs=1e-12)


def test_apply_isometry_examples():
    m = SampleMeasure.build(2, Box([0.0, 0.0], [4.0, 4.0]), [[1.0, 2.0]], [1.0])
    swapped = apply_isometry(m, [1, 0], [0.0, 0.0])
    np.testing.assert_array_equal(swapped.points, [[2.0, 1.0]])
    same = apply_isometry(m, [0, 1], [0.0, 0.0])
    np.testing.assert_array_equal(same.points, m.points)


def test_isometry_round_trip_integer_shift(gen):
    perm, shift = [1, 0], [2.0, -3.0]
    inv, ishift = inverse_isometry(perm, shift)
    # dyadic coordinates survive integer shifts without rounding
    pts = gen.integers(0, 24, (10, 2)) / 8.0
    m = SampleMeasure.build(2, Box([0.0, 0.0], [3.0, 3.0]), pts, gen.normal(size=10),
                            [[0.0, 0.0]], [[3.0, 3.0]], [-1.0])
    back = apply_isometry(apply_isometry(m, perm, shift), inv, ishift)
    np.testing.assert_array_equal(back.points, m.points)
    np.testing.assert_array_equal(back.weights, m.weights)
    np.testing.assert_array_equal(back.cell_lo, m.cell_lo)
    # arbitrary coordinates come back to within one rounding per shift
    s = sample(CenteredPoisson(dim=2), Box([0.0, 0.0], [3.0, 3.0]), seed=9)
    back = apply_isometry(apply_isometry(s, perm, shift), inv, ishift)
    np.testing.assert_allclose(back.points, s.points, rtol=0, atol=1e-15)


def test_marginalize_examples():
    m = SampleMeasure.build(2, Box([0.0, 0.0], [1.0, 1.0]), cell_lo=[[0.0, 0.0]],
                            cell_hi=[[1.0, 1.0]], densities=[1.0])
    mm = marginalize(m, [0], Box([0.0], [1.0]))
    assert mm.dim == 1
    np.testing.assert_array_equal(mm.densities, [1.0])
    with pytest.raises(ArgumentError):
        marginalize(m, [0], Box([0.0], [np.inf]))
    with pytest.raises(ArgumentError):
        marginalize(m, [0, 1], Box([0.0], [1.0]))


def test_combine_examples():
    m = sample(CenteredPoisson(), Box([0.0], [4.0]), seed=1)
    diff = combine(m, m, 1.0, -1.0)
    assert diff.n_atoms == 0 and diff.n_cells == 0
    z = SampleMeasure.zero(m.window)
    doubled = combine(m, z, 2.0, 0.0)
    b = Box([0.5], [3.0])
    assert integrate_box(doubled, b) == pytest.approx(2 * integrate_box(m, b), abs=1e-12)


def test_json_round_trip():
    m = sample(CenteredPoisson(dim=2), Box([0.0, 0.0], [2.0, 2.0]), seed=4)
    back = SampleMeasure.from_json(m.to_json())
    np.testing.assert_array_equal(back.points, m.points)
    np.testing.assert_array_equal(back.densities, m.densities)


def test_test_function_invariants():
    phi = TestFunction.from_arrays([[0.0], [1.0]], [[1.0], [3.0]], [2.0, -1.0])
    assert phi.l2_norm_sq == 4.0 + 2.0
    assert phi.sup_error == 0.0
    with pytest.raises(ArgumentError):
        TestFunction.from_arrays([[0.0], [0.5]], [[1.0], [2.0]], [1.0, 1.0])
    with pytest.raises(ArgumentError):
        TestFunction(((Box([0.0], [1.0]), 1.0),), sup_error=-1.0)


# properties ----------------------------------------------------------------------------

@given(measures(2), boxes(2), st.floats(0.05, 0.95), st.integers(0, 1))
def test_additivity(m, b, frac, axis):
    cut = b.lower[axis] + frac * (b.upper[axis] - b.lower[axis])
    hi1 = list(b.upper)
    hi1[axis] = cut
    lo2 = list(b.lower)
    lo2[axis] = cut
    whole = integrate_box(m, b)
    parts = integrate_box(m, Box(b.lower, hi1)) + integrate_box(m, Box(lo2, b.upper))
    assert _close(whole, parts)


@given(measures(2), boxes(2))
def test_domination(m, b):
    assert abs(integrate_box(m, b)) <= variation_box(m, b) * (1 + 1e-12) + 1e-12


@given(measures(1), st.lists(st.tuples(coord, st.floats(-1, 1)), min_size=1, max_size=4),
       st.lists(boxes(1), min_size=1, max_size=5))
def test_contraction(m, knots, probes):
    edges = sorted({k for k, _ in knots} | {5.0})
    lo = np.array(edges[:-1])[:, None]
    hi = np.array(edges[1:])[:, None]
    vals = np.array([v for _, v in knots][: len(lo)] + [0.5] * max(0, len(lo) - len(knots)))
    phi = TestFunction.from_arrays(lo, hi, vals)
    prod = multiply_by_function(m, phi)
    for b in probes:
        assert variation_box(prod, b) <= phi.sup_norm * variation_box(m, b) * (1 + 1e-12) + 1e-12


@given(measures(2), boxes(2), st.permutations([0, 1]), st.tuples(coord, coord))
def test_isometry_property(m, b, perm, shift):
    moved = apply_isometry(m, perm, shift)
    image = Box([b.lower[perm[i]] + shift[i] for i in range(2)],
                [b.upper[perm[i]] + shift[i] for i in range(2)])
    # (m o a)(B) = m(a(B))
    assert _close(integrate_box(moved, b), integrate_box(m, image))


@given(measures(2), boxes(1), boxes(1))
def test_marginal_consistency(m, a, b):
    mm = marginalize(m, [0], b)
    direct = integrate_box(m, Box([a.lower[0], b.lower[0]], [a.upper[0], b.upper[0]]))
    assert _close(integrate_box(mm, a), direct)


@given(measures(1), measures(1), st.floats(-2, 2), st.floats(-2, 2), boxes(1))
def test_linearity(a, b, ca, cb, box):
    c = combine(a, b, ca, cb)
    expect = ca * integrate_box(a, box) + cb * integrate_box(b, box)
    assert abs(integrate_box(c, box) - expect) <= 1e-12 * max(
        1.0, variation_box(a, box) * abs(ca) + variation_box(b, box) * abs(cb))
