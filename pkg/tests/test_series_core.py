import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from planarop.errors import ConvergenceError, DomainError, UsageError
from planarop.series_core import (
    Band,
    CircleSeries,
    HermitianSeries,
    ScalarRing,
    analytic_apply,
    diag_divide,
    diag_restrict,
    differentiate,
    hermitian_transpose,
    majorant_norm,
    multiply,
    poisson_extend,
)

N, R = 6, 12


def S(terms, n=N, r=R, ring=None):
    return HermitianSeries.from_monomials(terms, n, r, ring)


def mono(f, tol=1e-12):
    return {k: complex(v) for k, v in f.to_monomials(tol).items()}


def same(f, terms, tol=1e-12):
    """Compare slice-basis blocks (monomial conversion amplifies round-off)."""
    ref = S(terms, f.N, f.R).with_valid(f.valid)
    return np.allclose(f.a, ref.a, rtol=0, atol=tol)


def circle(b, D):
    c = np.zeros(2 * D + 1, dtype=complex)
    for d, v in b.items():
        c[d + D] = v
    return CircleSeries(c)


# -- rings and bands ---------------------------------------------------------


def test_band_rho_formula():
    b = Band(0.1)
    assert b.rho == pytest.approx(1 / (0.1 + math.sqrt(1.01)))
    assert 0 < b.rho < 1
    assert abs(Band(1e-4).rho - (1 - 1e-4)) < 1e-7


def test_band_rejects_out_of_range():
    with pytest.raises(DomainError):
        Band(1.5)


def test_big_ring_round_trips_decimal_text():
    ring = ScalarRing.big(40)
    with mpmath.workdps(40):
        x = mpmath.mpf("0.1234567890123456789012345678901234567891")
    f = S({(1, 1): x}, ring=ring)
    back = HermitianSeries.from_csv(f.to_csv())
    c = back.to_monomials()[(1, 1)]
    with mpmath.workdps(40):
        assert abs(c - x) < mpmath.mpf(10) ** -38


def test_jet_ring_is_truncated_polynomial_arithmetic():
    ring = ScalarRing.jets(2)
    one_plus = HermitianSeries.constant([1.0, 1.0, 0.0], N, R, ring)  # 1 + theta
    sq = multiply(one_plus, one_plus)
    assert np.allclose(sq.a[:, N, 0], [1, 2, 1])
    cube = multiply(sq, one_plus)
    assert np.allclose(cube.a[:, N, 0], [1, 3, 3])  # theta^3 dropped


# -- multiply ------------------------------------------------------------------


def test_multiply_difference_of_squares():
    f = multiply(S({(0, 0): 1, (1, 1): 1}), S({(0, 0): 1, (1, 1): -1}))
    assert same(f, {(0, 0): 1, (2, 2): -1})


def test_multiply_binomial_square():
    f = S({(1, 0): 1, (0, 1): 1})
    assert same(multiply(f, f), {(2, 0): 1, (1, 1): 2, (0, 2): 1})


def test_multiply_truncation_reports_tail():
    z = S({(1, 0): 1}, n=1)
    p = multiply(z, z)
    assert np.max(np.abs(p.a)) < 1e-15
    assert p.tail > 0


def test_multiply_rejects_ring_mismatch():
    with pytest.raises(UsageError):
        multiply(S({(0, 0): 1}), S({(0, 0): 1}, ring=ScalarRing.jets(1)))
    with pytest.raises(UsageError):
        multiply(S({(0, 0): 1}), S({(0, 0): 1}, n=N + 1))


# -- transpose -----------------------------------------------------------------


def test_transpose_examples():
    assert same(hermitian_transpose(S({(1, 0): 1j})), {(0, 1): -1j})
    f = S({(0, 1): 1, (1, 0): 1})
    assert same(hermitian_transpose(f), mono(f))
    assert same(hermitian_transpose(S({(2, 1): 2 + 3j})), {(1, 2): 2 - 3j})


# -- diagonal restriction and division ---------------------------------------


def test_diag_restrict_examples():
    b = diag_restrict(S({(1, 1): 1}))
    assert b.mode(0) == pytest.approx(1)
    b = diag_restrict(S({(2, 1): 1}))
    assert b.mode(1) == pytest.approx(1)
    assert np.sum(np.abs(b.coeffs)) == pytest.approx(1)
    b = diag_restrict(S({(0, 0): 3, (1, 0): 1, (0, 1): 1}))
    assert (b.mode(0), b.mode(1), b.mode(-1)) == pytest.approx((3, 1, 1))


def test_diag_divide_examples():
    assert same(diag_divide(S({(0, 0): 1, (1, 1): -1})), {(0, 0): 1})
    assert same(diag_divide(S({(1, 0): 1, (2, 1): -1})), {(1, 0): 1})
    with pytest.raises(DomainError):
        diag_divide(S({(1, 0): 1, (0, 1): -1}))


def test_diag_divide_lowers_valid_order():
    g = diag_divide(HermitianSeries.u(N, R))
    assert g.valid == R - 1


# -- Poisson extension -------------------------------------------------------


def test_poisson_extend_examples():
    assert same(poisson_extend(circle({0: 5}, 2), N, R), {(0, 0): 5})
    g = poisson_extend(circle({1: 1}, 2), N, R)
    assert g.evaluate(2.0, 0.5) == pytest.approx(2.0)  # eta^{-1}
    assert g.evaluate(1.5, 0.9) == pytest.approx(1 / 0.9, rel=1e-6)
    g = poisson_extend(circle({-2: 1}, 2), N, R)
    assert g.evaluate(1.2, 0.8) == pytest.approx(1.2**-2, rel=1e-6)


# -- analytic functions ------------------------------------------------------


def test_analytic_apply_examples():
    assert same(analytic_apply("exp", S({})), {(0, 0): 1})
    f = S({(0, 0): 2, (1, 1): 0.1})
    back = analytic_apply("exp", analytic_apply("log", f))
    z = 1.05 * np.exp(1j * np.linspace(0, 6, 7))
    assert np.max(np.abs(back.realize(z) - f.realize(z))) < 1e-12
    r = analytic_apply("sqrt", S({(0, 0): 4, (1, 1): 0.04}))
    assert complex(r.realize(np.array([1.0]))[0]) == pytest.approx(2 * math.sqrt(1.01))


def test_analytic_apply_centered_matches_pointwise():
    f = S({(0, 0): 2, (1, 0): 0.1, (0, 1): 0.1})
    a = analytic_apply("log", f)
    b = analytic_apply("log", f, method="centered")
    z = 1.02 * np.exp(1j * np.linspace(0, 6, 7))
    assert np.max(np.abs(a.realize(z) - b.realize(z))) < 1e-10


def test_analytic_apply_branch_cut():
    with pytest.raises(ConvergenceError):
        analytic_apply("log", S({(0, 0): -1}))
    with pytest.raises(UsageError):
        analytic_apply("tan", S({(0, 0): 1}))


# -- differentiation ---------------------------------------------------------


def test_differentiate_examples():
    assert same(differentiate(S({(2, 1): 1}), "zeta"), {(1, 1): 2}, tol=1e-10)
    assert same(differentiate(S({(1, 0): 1}), "eta"), {}, tol=1e-10)
    g = differentiate(S({(-1, 0): 1}), "zeta")
    z = 1.1 * np.exp(1j * np.linspace(0, 6, 5))
    assert np.max(np.abs(g.realize(z) + z**-2)) < 1e-8


# -- majorant norm -----------------------------------------------------------


def _band_for_rho(rho):
    return Band((1 / rho - rho) / 2)


def test_majorant_norm_examples():
    b = _band_for_rho(0.9)
    assert b.rho == pytest.approx(0.9)
    assert majorant_norm(S({(0, 0): 3}), Band(0.3)) == pytest.approx(3)
    assert majorant_norm(S({(1, 0): 1}), b) == pytest.approx(1 / 0.9)
    assert majorant_norm(S({(1, 0): 1, (0, 1): 1}), b) == pytest.approx(2 / 0.9)


# -- serialization -------------------------------------------------------------


def test_csv_header_and_round_trip():
    f = S({(2, 1): 1 + 2j, (0, 0): -0.5})
    text = f.to_csv()
    lines = text.splitlines()
    assert lines[0].startswith("# hermitian-series N=6 ring=")
    assert lines[1] == "j,k,re,im"
    assert same(HermitianSeries.from_csv(text), mono(f))


# -- properties ----------------------------------------------------------------

coef = st.complex_numbers(max_magnitude=1.0, allow_nan=False, allow_infinity=False)
idx = st.integers(min_value=0, max_value=2)
terms = st.dictionaries(st.tuples(idx, idx), coef, max_size=5)
PROPS = settings(max_examples=200, deadline=None)
Z8 = np.exp(2j * np.pi * np.arange(8) / 8)


@PROPS
@given(terms, terms)
def test_multiply_commutes(a, b):
    f, g = S(a), S(b)
    assert np.allclose(multiply(f, g).a, multiply(g, f).a, atol=1e-12)


@PROPS
@given(terms, terms, terms)
def test_multiply_associative_when_bands_fit(a, b, c):
    f, g, h = S(a), S(b), S(c)
    assert np.allclose(multiply(multiply(f, g), h).a, multiply(f, multiply(g, h)).a, atol=1e-10)


@PROPS
@given(terms, terms)
def test_transpose_involution_and_intertwining(a, b):
    f, g = S(a), S(b)
    assert np.array_equal(hermitian_transpose(hermitian_transpose(f)).a, f.a)
    lhs = hermitian_transpose(multiply(f, g))
    rhs = multiply(hermitian_transpose(f), hermitian_transpose(g))
    assert np.allclose(lhs.a, rhs.a, atol=1e-12)


@PROPS
@given(st.dictionaries(st.integers(-4, 4), coef, max_size=6))
def test_restrict_after_extend_is_identity(b):
    c = circle(b, 4)
    back = diag_restrict(poisson_extend(c, N, R))
    assert np.allclose(back.coeffs[0, N - 4 : N + 5], c.coeffs[0], atol=1e-14)


@PROPS
@given(terms)
def test_divide_then_multiply_recovers(a):
    f = multiply(HermitianSeries.u(N, R), S(a))
    g = diag_divide(f)
    back = multiply(HermitianSeries.u(N, R), g)
    assert np.allclose(back.a[:, :, : g.valid + 1], f.a[:, :, : g.valid + 1], atol=1e-12)


@PROPS
@given(terms, terms)
def test_majorant_submultiplicative(a, b):
    band = Band(0.1)
    f, g = S(a), S(b)
    fg = multiply(f, g)
    assert majorant_norm(fg, band) <= majorant_norm(f, band) * majorant_norm(g, band) * (1 + 1e-9) + fg.tail + 1e-12


@PROPS
@given(terms, terms)
def test_evaluation_consistency_after_operations(a, b):
    f, g = S(a), S(b)
    for h in (multiply(f, g), f + g, hermitian_transpose(f), differentiate(f, "zeta")):
        on = h.realize(Z8)
        ref = diag_restrict(h)(np.angle(Z8))
        assert np.allclose(on, ref, atol=1e-10)


@PROPS
@given(terms)
def test_real_functions_are_hermitian(a):
    f = S(a)
    g = f + hermitian_transpose(f)  # realizes 2 Re f
    assert np.allclose(hermitian_transpose(g).a, g.a, atol=1e-14)
    assert np.allclose(g.realize(Z8).imag, 0, atol=1e-12)
    b = diag_restrict(g).coeffs[0]
    assert np.allclose(b, np.conj(b[::-1]), atol=1e-12)


@PROPS
@given(st.floats(min_value=1e-6, max_value=0.99))
def test_band_rho_in_unit_interval(sigma):
    rho = Band(sigma).rho
    assert 0 < rho < 1
    assert abs(rho - (1 - sigma)) <= sigma * sigma
