import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from splitfield import ArgumentError, PremiseError
from splitfield.cgf import (
    CSV_COLUMNS,
    DiscreteLaw,
    analytic_cgf,
    cgf_terms,
    estimate_cgf,
    holder_sandwich_check,
    leak_cgf_terms,
    mc_cgf,
    model_f_properties,
    premise_families,
    restrict_phi,
    sigma_of_model,
    subexp_quadratic_check,
)
from splitfield.fields import BlockIID, CenteredPoisson, ShotNoise, split_sample
from splitfield.measure import Box, TestFunction, integrate_scaled

LOG54 = math.log(1.25)


# analytic ---------------------------------------------------------------------

def test_analytic_zero_and_value(unit1):
    P = CenteredPoisson()
    assert analytic_cgf(P, unit1, 1.0, 0.0) == 0.0
    assert analytic_cgf(P, unit1, 1.0, 0.1) == pytest.approx(0.00517091808, abs=1e-11)


@given(st.floats(0.1, 100.0), st.floats(-2.0, 2.0))
def test_poisson_indicator_scales_with_r(r, lam):
    unit1 = TestFunction.indicator(Box([0.0], [1.0]))
    if abs(lam) < 1e-3:
        exact = r * lam * lam * (0.5 + lam / 6 + lam * lam / 24 + lam ** 3 / 120)
    else:
        exact = r * (math.expm1(lam) - lam)
    assert analytic_cgf(CenteredPoisson(), unit1, r, lam) == pytest.approx(exact, rel=1e-12,
                                                                         abs=1e-300)


def test_shot_noise_cgf_against_quadrature():
    # phi = 1_[0,1), r = 3, kernel 1_[0,1): a point at p contributes
    # G(p) = |[p, p+1) & [0, 3)|; K(lam) = int (e^{lam G} - 1 - lam G) dp
    phi = TestFunction.indicator(Box([0.0], [1.0]))
    lam = 0.7

    def g(p):
        return max(0.0, min(p + 1, 3.0) - max(p, 0.0))

    ref = integrate.quad(lambda p: math.exp(lam * g(p)) - 1 - lam * g(p), -1.0, 3.0,
                         points=[0.0, 2.0], epsabs=1e-14)[0]
    assert analytic_cgf(ShotNoise(), phi, 3.0, lam) == pytest.approx(ref, rel=1e-12)


@given(st.floats(-30.0, 30.0))
def test_logcosh_accuracy(x):
    from splitfield.fields import logcosh

    # cosh x - 1 is about x^2 / 2, so tiny x needs extra digits to resolve it
    digits = 40 + (2 * int(-math.log10(abs(x))) if 0 < abs(x) < 1 else 0)
    with mpmath.workdps(digits):
        ref = float(mpmath.log(mpmath.cosh(x)))
    assert logcosh(x) == pytest.approx(ref, rel=1e-14, abs=1e-300)


def test_block_iid_single_cell(unit1):
    lam = np.linspace(-2, 2, 9)
    np.testing.assert_allclose(analytic_cgf(BlockIID(), unit1, 1.0, lam), np.log(np.cosh(lam)),
                               rtol=1e-14, atol=1e-15)


@pytest.mark.parametrize("model", [CenteredPoisson(), ShotNoise(), BlockIID()])
def test_convex_on_grid(model):
    phi = TestFunction.from_arrays([[0.0], [0.5]], [[0.5], [1.5]], [1.0, -2.0])
    lam = np.linspace(-1.5, 1.5, 301)
    k = analytic_cgf(model, phi, 2.5, lam)
    assert np.min(np.diff(k, 2)) >= -1e-10
    assert analytic_cgf(model, phi, 2.5, 0.0) == 0.0


def test_variance_matches_sigma():
    phi = TestFunction.indicator(Box([0.0, 0.0], [1.0, 1.0]))
    for model in (CenteredPoisson(dim=2), ShotNoise(dim=2), BlockIID(dim=2)):
        var = cgf_terms(model, phi, 40.0).variance / 1600.0
        assert var == pytest.approx(model.sigma_sq, rel=0.06)


# sigma -------------------------------------------------------------------------------

def test_sigma_analytic():
    assert sigma_of_model(CenteredPoisson()) == 1.0
    assert sigma_of_model(ShotNoise()) == 1.0
    k = TestFunction.from_arrays([[0.0], [0.5]], [[0.5], [1.0]], [1.0, -1.0])
    assert sigma_of_model(ShotNoise(kernel=k)) == 0.0


def test_sigma_empirical():
    n = 100_000
    est = sigma_of_model(CenteredPoisson(), "empirical", 64.0, n, seed=4)
    # the sample sd of a near-normal variable has sd about sigma / sqrt(2n)
    assert abs(est - 1.0) <= 3.0 / math.sqrt(2 * n)
    with pytest.raises(ArgumentError):
        sigma_of_model(CenteredPoisson(), "empirical", 8.0, n)


# Monte Carlo --------------------------------------------------------------------------

def test_mc_zero_lambda_exact(unit1):
    est = mc_cgf(CenteredPoisson(), unit1, 1.0, [0.0], 2000, seed=1)[0]
    assert (est.value, est.ci_low, est.ci_high) == (0.0, 0.0, 0.0)


def test_mc_poisson_ci_contains_analytic(unit1):
    est = mc_cgf(CenteredPoisson(), unit1, 1.0, [0.1], 200_000, seed=2)[0]
    assert est.ci_low <= math.exp(0.1) - 1.1 <= est.ci_high
    assert est.flag == "ok"


def test_mc_block_iid_logcosh(unit1):
    lam = [-0.8, 0.3, 1.0]
    for e in mc_cgf(BlockIID(), unit1, 1.0, lam, 50_000, seed=3):
        assert e.ci_low <= math.log(math.cosh(e.lam)) <= e.ci_high


def test_mc_requires_draws(unit1):
    with pytest.raises(ArgumentError):
        mc_cgf(CenteredPoisson(), unit1, 1.0, [0.1], 10, 0)


def test_unstable_flag():
    # a heavy right tail makes the exponential weights concentrate
    x = np.concatenate([np.zeros(9990), np.full(10, 50.0)])
    est = estimate_cgf(x, [1.0], seed=0, n_boot=200)[0]
    assert est.flag == "unstable"
    assert est.ci_low <= est.value <= est.ci_high


def test_estimate_bootstrap_paths_agree():
    # few distinct values -> multinomial path; perturbing breaks ties -> index path
    gen = np.random.default_rng(5)
    x = gen.integers(-3, 4, 20_000).astype(float)
    a = estimate_cgf(x, [0.3], seed=1)[0]
    b = estimate_cgf(x + gen.uniform(-1e-9, 1e-9, len(x)), [0.3], seed=1)[0]
    assert a.value == pytest.approx(b.value, abs=1e-8)
    assert a.ci_high - a.ci_low == pytest.approx(b.ci_high - b.ci_low, rel=0.2)


def test_csv_columns():
    assert CSV_COLUMNS == ["lambda", "value", "ci_low", "ci_high", "n", "ess", "flag"]


# leak CGF ---------------------------------------------------------------------------------

@pytest.mark.parametrize("model,offset", [(ShotNoise(), 0.0), (BlockIID(), 0.5)])
def test_leak_cgf_variance_matches_sampling(model, offset):
    phi = TestFunction.indicator(Box([-1.0], [1.0]))
    r = 2.0
    terms = leak_cgf_terms(model, phi, r, 0, offset)
    window = Box([-3.0], [3.0])
    z = np.array([integrate_scaled(split_sample(model, window, 0, offset, s).leak, phi, r)
                  for s in range(4000)])
    var = terms.variance
    assert abs(z.mean()) <= 4 * math.sqrt(var / len(z))
    # sample variance of a sum of few Poisson/sign terms: generous 15% band
    assert z.var() == pytest.approx(var, rel=0.15)


def test_poisson_leak_cgf_is_zero(unit1):
    terms = leak_cgf_terms(CenteredPoisson(), TestFunction.indicator(Box([-1.0], [1.0])), 4.0)
    assert terms.variance == 0.0


def test_restrict_phi():
    phi = TestFunction.from_arrays([[-1.0], [0.0]], [[0.0], [1.0]], [2.0, 3.0])
    up = restrict_phi(phi, Box([0.0], [np.inf]))
    assert up.l2_norm_sq == 9.0
    assert restrict_phi(phi, Box([5.0], [6.0])) is None


# sub-exponential quadratic bound and the quarter bound ------------------------------------

def test_two_point_abs2_example():
    law = DiscreteLaw(np.array([-math.log(2), math.log(2)]), np.array([0.5, 0.5]))
    rep = subexp_quadratic_check(law, "abs2")
    assert rep.holds and rep.n_checks == 201 and rep.max_violation <= 0.0


def test_zero_law():
    law = DiscreteLaw(np.array([0.0]), np.array([1.0]))
    rep = subexp_quadratic_check(law, "abs2")
    assert rep.holds and rep.max_violation == 0.0


def test_quarter_two_point():
    a = math.log(1.25) / 2
    law = DiscreteLaw(np.array([-a, a]), np.array([0.5, 0.5]))
    assert subexp_quadratic_check(law, "quarter").holds


def test_premise_refusal():
    law = DiscreteLaw(np.array([-3.0, 3.0]), np.array([0.5, 0.5]))
    with pytest.raises(PremiseError):
        subexp_quadratic_check(law, "abs2")
    with pytest.raises(PremiseError):
        subexp_quadratic_check(DiscreteLaw(np.array([1.0]), np.array([1.0])), "abs2")


@pytest.mark.parametrize("kind", ["abs2", "quarter"])
def test_premise_families_zero_violations(kind):
    for law in premise_families(kind, 100, seed=7):
        assert subexp_quadratic_check(law, kind).holds


def test_subexp_mc_path():
    law = premise_families("abs2", 1, seed=3)[0]
    rep = subexp_quadratic_check(law, "abs2", np.linspace(-1, 1, 21), n_mc=20_000, seed=1)
    assert rep.holds


# Hoelder sandwich ----------------------------------------------------------------------

def test_sandwich_zero():
    zero = lambda t: 0.0  # noqa: E731
    rep = holder_sandwich_check(zero, zero, zero, [1.5, 2.0, 4.0], [1.0])
    assert rep.holds and rep.max_violation == 0.0


def test_sandwich_independent_two_point_strict():
    X = DiscreteLaw(np.array([-1.0, 1.0]), np.array([0.5, 0.5]))
    Y = DiscreteLaw(np.array([-0.5, 2.0]), np.array([0.8, 0.2]))
    # enumerate the four outcomes of X + Y
    vals = np.add.outer(X.values, Y.values).ravel()
    probs = np.outer(X.probs, Y.probs).ravel()
    S = DiscreteLaw(vals, probs)
    rep = holder_sandwich_check(X.cgf, Y.cgf, S.cgf, [2.0], [1.0])
    assert rep.holds and rep.max_violation < 0


def test_sandwich_poisson_halves():
    P = CenteredPoisson()
    r = 4.0
    left = TestFunction.indicator(Box([-1.0], [0.0]))
    right = TestFunction.indicator(Box([0.0], [1.0]))
    both = TestFunction.indicator(Box([-1.0], [1.0]))

    def x_cgf(t):
        return analytic_cgf(P, left, r, t) + analytic_cgf(P, right, r, t)

    def joint(t):
        return analytic_cgf(P, both, r, t)

    assert joint(0.1) == pytest.approx(x_cgf(0.1), rel=1e-14)
    rep = holder_sandwich_check(x_cgf, lambda t: 0.0, joint, [1.5, 2.0, 4.0], [0.1])
    assert rep.holds


def test_sandwich_rejects_bad_p():
    with pytest.raises(ArgumentError):
        holder_sandwich_check(abs, abs, abs, [1.0])


# per-model shape properties ---------------------------------------------------------

@pytest.mark.parametrize("model", [CenteredPoisson(), ShotNoise(), BlockIID()])
def test_model_f_properties(model):
    rep = model_f_properties(model, [[1.0], [2.0], [3.0], [4.0]], np.linspace(-1, 1, 21))
    assert rep["holds"], rep


def test_poisson_small_lambda_limit():
    rep = model_f_properties(CenteredPoisson(), [[1.0]], [0.1])
    assert rep["small_lambda"]["(1.0,)"]["limit"] == pytest.approx(0.5, abs=1e-8)


def test_subadditivity_example():
    # r = s = 1, lam = 0.1: 2(e^{0.1}-1-0.1) <= (e^{0.2}-1-0.2)
    assert 2 * (math.exp(0.1) - 1.1) <= math.exp(0.2) - 1.2
    rep = model_f_properties(CenteredPoisson(), [[1.0]], [0.1])
    assert rep["subadditive"]["holds"]


def test_normalized_ratio_increasing_in_r():
    from splitfield.cgf import normalized_cgf

    lam = 0.3
    vals = [normalized_cgf(CenteredPoisson(), (r,), lam * math.sqrt(r)) / lam ** 2
            for r in (1.0, 2.0, 4.0, 8.0)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))
