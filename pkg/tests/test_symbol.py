"""Tests for truncated Fourier and rational symbols."""

import numpy as np
import pytest

from szego_lab.exceptions import (
    DimensionMismatchError,
    InvalidSymbolError,
    PoleInsideDiscError,
    RankMismatchError,
    TailNotResolvedError,
)
from szego_lab.symbol import (
    FourierSymbol,
    RationalSymbol,
    analytic_product,
    as_fourier,
    fit_rational,
    inner,
    rational_to_fourier,
    resolve_truncation,
    sobolev_norm_sq,
    symbol_from_dict,
    symbol_to_dict,
    szego_project_product,
)
from tests.settings import V3_SYMBOL, V4_SYMBOL


def double_pole(p):
    """z / (1 - p z)^2."""
    return RationalSymbol(np.array([0.0, 1.0]), np.array([1.0, -2 * p, p * p]))


def test_double_pole_expansion():
    """z / (1 - p z)^2 has coefficients n p^(n-1)."""
    u = rational_to_fourier(double_pole(0.5), 128)
    n = np.arange(1, 20)
    assert np.allclose(u.coeffs[1:20], n * 0.5 ** (n - 1), rtol=1e-14)
    assert u.coeffs[0] == 0


@pytest.mark.parametrize(
    ("num", "den", "class_d"),
    [
        ([2.0], [1.0], 1),
        ([1.0, 0.5], [1.0, -0.3], 3),
        ([0.0, 1.0], [1.0, -1.0, 0.25], 4),
        ([1.0], [1.0, -0.5], 2),
        ([0.0], [1.0], 0),
    ],
)
def test_class_from_degrees(num, den, class_d):
    """The class is 2 deg B below the diagonal and 2 deg A + 1 on or above it."""
    assert RationalSymbol(np.array(num), np.array(den)).class_d == class_d


def test_denominator_is_normalized():
    r = RationalSymbol(np.array([2.0, 0.0]), np.array([2.0, -1.0]))
    assert r.den[0] == 1
    assert np.allclose(r.num, [1.0])
    assert np.allclose(r.poles, [0.5])


def test_pole_inside_disc_rejected():
    with pytest.raises(PoleInsideDiscError):
        RationalSymbol(np.array([1.0]), np.array([1.0, -2.0]))


def test_common_root_rejected():
    with pytest.raises(InvalidSymbolError):
        RationalSymbol(np.array([1.0, -0.5]), np.array([1.0, -0.5]))


@pytest.mark.parametrize("coeffs", [[], [np.nan, 1.0], [np.inf]])
def test_invalid_coefficients(coeffs):
    with pytest.raises(InvalidSymbolError):
        FourierSymbol(np.array(coeffs, dtype=complex))


def test_truncation_doubles_until_tail_resolves():
    """1 / (1 - 0.9 z) needs 512 modes for a relative tail of 1e-24."""
    r = RationalSymbol(np.array([1.0]), np.array([1.0, -0.9]))
    u = resolve_truncation(r)
    assert u.trunc_dim == 512
    assert u.tail_mass() <= 1e-24


def test_unresolved_tail_raises():
    r = RationalSymbol(np.array([1.0]), np.array([1.0, -0.9]))
    with pytest.raises(TailNotResolvedError):
        resolve_truncation(r, max_n=128)


def test_trimmed_keeps_mass():
    u = rational_to_fourier(double_pole(0.5), 256)
    short = u.trimmed()
    assert short.trunc_dim == 64
    assert short.norm() == pytest.approx(u.norm(), rel=1e-14)


def test_mass_closed_form():
    """|z / (1 - p z)^2|^2 = (1 + r) / (1 - r)^3 with r = p^2."""
    u = resolve_truncation(double_pole(0.5))
    assert inner(u, u).real == pytest.approx(1.25 / 0.75**3, rel=1e-13)


def test_szego_projection_against_shift():
    """Pi(u conj(z)) is the backward shift of u."""
    u = resolve_truncation(double_pole(0.5))
    z = FourierSymbol.basis(1, u.trunc_dim)
    shifted = szego_project_product(u, z)
    assert np.allclose(shifted.coeffs[:-1], u.coeffs[1:])
    assert shifted.coeffs[-1] == 0
    one = FourierSymbol.basis(0, u.trunc_dim)
    assert np.allclose(szego_project_product(u, one).coeffs, u.coeffs)


def test_analytic_product_of_simple_poles():
    """(1 / (1 - p z))^2 has coefficients (n + 1) p^n."""
    u = resolve_truncation(RationalSymbol(np.array([1.0]), np.array([1.0, -0.3])))
    square = analytic_product(u, u)
    n = np.arange(30)
    assert np.allclose(square.coeffs[:30], (n + 1) * 0.3**n, rtol=1e-13)


def test_sobolev_norm_reduces_to_mass():
    u = resolve_truncation(double_pole(0.4))
    assert sobolev_norm_sq(u, 0) == pytest.approx(u.norm() ** 2)
    assert sobolev_norm_sq(u, 1) > sobolev_norm_sq(u, 0.5) > u.norm() ** 2


def test_rotation_and_scaling():
    u = FourierSymbol(np.array([1.0, 1.0, 1.0]))
    rotated = u.rotated(np.pi / 2)
    assert np.allclose(rotated.coeffs, [1.0, 1j, -1.0])
    assert np.allclose((2j * u).coeffs, [2j, 2j, 2j])


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        FourierSymbol.zeros(4) + FourierSymbol.zeros(8)
    with pytest.raises(DimensionMismatchError):
        inner(FourierSymbol.zeros(4), FourierSymbol.zeros(8))


@pytest.mark.parametrize(
    ("num", "den", "d"),
    [
        ([0.0, 1.0], [1.0, -0.6, 0.08], 4),
        ([1.0, 0.5j], [1.0, -0.3j], 3),
        ([0.7 - 0.2j], [1.0, 0.4], 2),
    ],
)
def test_fit_rational_recovers_symbol(num, den, d):
    r = RationalSymbol(np.array(num), np.array(den))
    fitted = fit_rational(resolve_truncation(r), d)
    assert fitted.class_d == d
    assert np.allclose(fitted.num, r.num, atol=1e-9)
    assert np.allclose(fitted.den, r.den, atol=1e-9)


def test_fit_rational_class_zero():
    u = resolve_truncation(double_pole(0.5))
    with pytest.raises(RankMismatchError):
        fit_rational(u, 0)
    assert fit_rational(FourierSymbol.zeros(8), 0).class_d == 0


def test_symbol_json_roundtrip():
    r = symbol_from_dict(V4_SYMBOL)
    assert isinstance(r, RationalSymbol)
    assert r.class_d == 4
    again = symbol_from_dict(symbol_to_dict(r))
    assert np.allclose(again.num, r.num)
    assert np.allclose(again.den, r.den)

    u = as_fourier(symbol_from_dict(V3_SYMBOL))
    fourier = symbol_from_dict(symbol_to_dict(u))
    assert isinstance(fourier, FourierSymbol)
    assert np.allclose(fourier.coeffs, u.coeffs)
    assert as_fourier(fourier) is fourier


@pytest.mark.parametrize(
    "document",
    [
        {"type": "polynomial", "coeffs": [[1.0, 0.0]]},
        {"type": "rational", "den": [[1.0, 0.0]]},
        {"type": "fourier", "coeffs": [["a", 0.0]]},
        {"coeffs": [[1.0, 0.0]]},
    ],
)
def test_symbol_json_errors(document):
    with pytest.raises(InvalidSymbolError):
        symbol_from_dict(document)
