"""Tests for the Hankel operators and their spectral data."""

import numpy as np
import pytest

from szego_lab.exceptions import (
    AmbiguousGroupingError,
    DegenerateSpectrumError,
    ZeroSymbolError,
)
from szego_lab.hankel import (
    Dominance,
    angle_residual,
    apply_hankel,
    apply_shifted,
    eigen_projections,
    hankel_matrix,
    hankel_square,
    interlacement_check,
    is_generic,
    norm_formula_check,
    rank_one_residual,
    shifted_matrix,
    shifted_square,
    singular_spectrum,
    spectral_data_to_dict,
)
from szego_lab.symbol import FourierSymbol, RationalSymbol, resolve_truncation
from tests.settings import SEED


def simple_pole(p, amplitude=1.0):
    """amplitude / (1 - p z)."""
    return resolve_truncation(
        RationalSymbol(np.array([amplitude]), np.array([1.0, -p]))
    )


def test_matrices_match_actions():
    rng = np.random.default_rng(SEED)
    u = simple_pole(0.5)
    n = u.trunc_dim
    h = FourierSymbol(rng.standard_normal(n) + 1j * rng.standard_normal(n))
    assert np.allclose(apply_hankel(u, h).coeffs, hankel_matrix(u) @ h.coeffs.conj())
    assert np.allclose(apply_shifted(u, h).coeffs, shifted_matrix(u) @ h.coeffs.conj())


def test_simple_pole_spectrum():
    """1 / (1 - p z) has rho^2 = 1 / (1 - p^2)^2 and sigma^2 = p^2 / (1 - p^2)^2."""
    sd = singular_spectrum(simple_pole(0.5))
    assert sd.h_values == pytest.approx([16 / 9], rel=1e-12)
    assert sd.k_values == pytest.approx([4 / 9], rel=1e-12)
    assert sd.rank_h == 1
    assert sd.rank_k == 1
    assert sd.dominance == [Dominance.H_DOMINANT, Dominance.K_DOMINANT]
    assert sd.is_simple()
    assert is_generic(sd)


@pytest.mark.parametrize("theta", [0.0, 0.4, -1.3])
def test_angles_follow_phase(theta):
    """Multiplying u by e^{i theta} shifts phi by theta and psi by -theta."""
    u = simple_pole(0.5, np.exp(1j * theta))
    sd = singular_spectrum(u)
    assert sd.h_angles[0] == pytest.approx(theta, abs=1e-12)
    assert sd.k_angles[0] == pytest.approx(-theta, abs=1e-12)
    assert angle_residual(u, sd) < 1e-12


def test_constant_symbol():
    sd = singular_spectrum(FourierSymbol.basis(0, 16, 2.0))
    assert sd.h_values == pytest.approx([4.0])
    assert sd.rank_k == 0
    assert sd.merged[0].dominance is Dominance.H_DOMINANT


def test_zero_symbol():
    with pytest.raises(ZeroSymbolError):
        singular_spectrum(FourierSymbol.zeros(16))


def test_monomial_is_degenerate():
    """z^2 has dim E = 3 and dim F = 2 at the single value 1."""
    u = FourierSymbol.basis(2, 16)
    sd = singular_spectrum(u)
    assert len(sd.merged) == 1
    entry = sd.merged[0]
    assert (entry.dim_e, entry.dim_f) == (3, 2)
    assert entry.dominance is Dominance.H_DOMINANT
    assert not sd.is_simple()
    with pytest.raises(DegenerateSpectrumError):
        norm_formula_check(u, sd)


def test_ambiguous_gap():
    with pytest.raises(AmbiguousGroupingError):
        singular_spectrum(simple_pole(0.5), group_tol=0.1)


def test_generic_structure(generic_v4):
    u = generic_v4
    sd = singular_spectrum(u)
    assert sd.rank_h + sd.rank_k == 4
    assert rank_one_residual(u) < 1e-12
    assert interlacement_check(sd).ok
    assert norm_formula_check(u, sd).max_residual < 1e-8
    assert angle_residual(u, sd) < 1e-10


def test_projections_sum_to_symbol(generic_v4):
    u = generic_v4
    proj = eigen_projections(u, singular_spectrum(u))
    total = np.sum(proj.u_k_K, axis=0) + proj.u_inf_K
    assert np.allclose(total, u.coeffs)
    assert np.allclose(np.sum(proj.u_j_H, axis=0), u.coeffs, atol=1e-10)


def test_spectral_json(generic_v4):
    document = spectral_data_to_dict(singular_spectrum(generic_v4))
    assert set(document) == {"h", "k", "dominance"}
    assert len(document["h"]) == 2
    assert len(document["k"]) == 2
    assert all(entry["mult"] == 1 for entry in document["h"] + document["k"])
    assert document["dominance"] == ["H", "K", "H", "K"]


def test_squares_are_double_actions(generic_v4):
    """H_u^2 and K_u^2 are linear: applying the antilinear action twice."""
    u = generic_v4
    rng = np.random.default_rng(SEED)
    n = u.trunc_dim
    h = FourierSymbol(rng.standard_normal(n) + 1j * rng.standard_normal(n))
    assert np.allclose(
        hankel_square(u) @ h.coeffs, apply_hankel(u, apply_hankel(u, h)).coeffs
    )
    assert np.allclose(
        shifted_square(u) @ h.coeffs, apply_shifted(u, apply_shifted(u, h)).coeffs
    )
    trace_gap = np.trace(hankel_square(u)).real - np.trace(shifted_square(u)).real
    assert trace_gap == pytest.approx(u.norm() ** 2, rel=1e-12)
