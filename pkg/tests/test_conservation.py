"""Tests for conserved quantities and the resolvent identities."""

import numpy as np
import pytest

from szego_lab.conservation import (
    check_resonance,
    conservation_report,
    ell,
    generating_residues,
    identity_suite,
    j_factor,
    locate_resonance,
    mass,
    moments,
    momentum,
    resonant_v3_symbol,
    series_sample,
    structural_checks,
    v4_closed_form_ells,
    v4_example_invariants,
    v4_example_symbol,
)
from szego_lab.exceptions import (
    DegenerateSigmasError,
    InconsistentInputsError,
    NotOnResonantLeafError,
    ResonantXError,
)
from szego_lab.hankel import eigen_projections, singular_spectrum
from szego_lab.symbol import FourierSymbol, RationalSymbol, resolve_truncation
from tests.settings import IDENTITY_TOL, RESONANT_R


def simple_pole(p):
    return resolve_truncation(RationalSymbol(np.array([1.0]), np.array([1.0, -p])))


def test_simple_pole_quantities():
    """1 / (1 - p z): Q = 1 / (1 - p^2), M = p^2 / (1 - p^2)^2 and J = Q^2."""
    u = simple_pole(0.5)
    assert mass(u) == pytest.approx(4 / 3, rel=1e-13)
    assert momentum(u) == pytest.approx(4 / 9, rel=1e-12)
    assert j_factor(u) == pytest.approx(16 / 9, rel=1e-12)


def test_simple_pole_ells():
    """A single K-eigenvalue carries all of Q^2."""
    u = simple_pole(0.5)
    report = conservation_report(u)
    assert report.sigma_sq == pytest.approx((4 / 9,), rel=1e-12)
    assert report.ell_values == pytest.approx((16 / 9,), rel=1e-10)
    assert abs(report.ell_inf) < 1e-12
    assert report.hamiltonian == pytest.approx((16 / 9) ** 2 / 2, rel=1e-12)
    assert max(report.residuals().values()) < IDENTITY_TOL


def test_zero_symbol_report():
    report = conservation_report(FourierSymbol.zeros(8))
    assert report.mass == 0
    assert report.ells == ()


def test_ell_rejects_foreign_projections():
    u = simple_pole(0.5)
    sd = singular_spectrum(u)
    larger = u.resized(2 * u.trunc_dim)
    proj = eigen_projections(larger, singular_spectrum(larger))
    with pytest.raises(InconsistentInputsError):
        ell(u, sd, proj)


def test_generic_trace_identities(generic_v4):
    report = conservation_report(generic_v4)
    assert len(report.ells) == 2
    assert sum(report.ell_values) + report.ell_inf == pytest.approx(
        report.mass**2, rel=IDENTITY_TOL
    )
    assert max(report.residuals().values()) < IDENTITY_TOL


@pytest.mark.parametrize("theta", [0.7, -2.0])
def test_gauge_invariance(generic_v4, theta):
    """ell_k and sigma_k^2 survive u -> e^{i theta} u and u(z) -> u(e^{i theta} z)."""
    base = conservation_report(generic_v4)
    for moved in (generic_v4 * np.exp(1j * theta), generic_v4.rotated(theta)):
        report = conservation_report(moved)
        assert report.mass == pytest.approx(base.mass, rel=1e-12)
        assert abs(report.j) == pytest.approx(abs(base.j), rel=1e-10)
        assert np.allclose(report.sigma_sq, base.sigma_sq, rtol=1e-10, atol=0)
        assert np.allclose(report.ell_values, base.ell_values, rtol=1e-10, atol=1e-12)


def test_moments():
    """J_1 = u(0) and J_2 = |H_u(1)|^2 = Q."""
    u = simple_pole(0.5)
    values = moments(u, 4)
    assert len(values) == 4
    assert values[0] == pytest.approx(1.0)
    assert values[1] == pytest.approx(mass(u), rel=1e-12)
    with pytest.raises(ValueError, match="n_max"):
        moments(u, 1)


def test_series_at_origin():
    """At x = 0 the resolvents are the identity."""
    u = simple_pole(0.5)
    sample = series_sample(u, 0.0)
    q = mass(u)
    assert sample.j0 == pytest.approx(1.0)
    assert sample.r_val == pytest.approx(q**2, rel=1e-12)
    assert sample.f_val == pytest.approx(2 * q, rel=1e-12)
    assert sample.z == pytest.approx(1.0)


def test_resonant_x_rejected():
    u = simple_pole(0.5)
    with pytest.raises(ResonantXError):
        check_resonance(u, 9 / 16)
    with pytest.raises(ResonantXError):
        series_sample(u, 9 / 4)


def test_singular_resolvent_is_resonant():
    """Skipping the margin check still maps a singular solve to ResonantXError."""
    u = simple_pole(0.5)
    with pytest.raises(ResonantXError, match="singular"):
        series_sample(u, 9 / 4, check=False)


def test_identity_suite(generic_v4):
    report = identity_suite(generic_v4)
    assert report.x_grid
    assert all(x != 0 for x in report.x_grid)
    assert report.max_residual < 1e-7


def test_identity_suite_v6(generic_v6):
    report = identity_suite(generic_v6)
    assert report.x_grid
    assert report.max_residual < 1e-7


def test_identity_suite_zero_symbol():
    assert identity_suite(FourierSymbol.zeros(8)).max_residual == 0.0


def test_generating_residues_recover_ells(generic_v4):
    report = conservation_report(generic_v4)
    ells, ell_inf = generating_residues(generic_v4)
    assert np.allclose(ells, report.ell_values, rtol=1e-6, atol=1e-8)
    assert ell_inf == pytest.approx(report.ell_inf, abs=1e-6)


def test_structural_checks(generic_v4):
    report = structural_checks(generic_v4)
    assert report.interlaced
    assert report.alternating
    assert report.rank_matches(4)
    assert report.rank_one_residual < 1e-12
    assert report.trace_residual < 1e-10
    assert report.mass_trace_residual < 1e-10


@pytest.mark.parametrize("r", [0.1, 0.25, 0.4])
def test_v4_example_closed_forms(r):
    u = resolve_truncation(v4_example_symbol(r))
    expected = v4_example_invariants(r)
    report = conservation_report(u)
    q = report.mass
    assert q == pytest.approx(expected["mass"], rel=1e-12)
    assert abs(report.j) ** 2 / q**2 == pytest.approx(expected["j_ratio"], rel=1e-10)
    assert report.sigma_sq[0] == pytest.approx(expected["sigma1_sq"], rel=1e-10)
    assert report.sigma_sq[1] == pytest.approx(expected["sigma2_sq"], rel=1e-10)

    closed = v4_closed_form_ells(q, abs(report.j) ** 2, *report.sigma_sq)
    assert closed == pytest.approx(report.ell_values, rel=1e-8, abs=1e-10)


def test_degenerate_sigmas():
    with pytest.raises(DegenerateSigmasError):
        v4_closed_form_ells(1.0, 1.0, 0.5, 0.5)


def test_locate_resonance():
    """ell_1 of z / (1 - p z)^2 vanishes at p^2 = 3 sqrt(2) - 4."""
    root, samples = locate_resonance(0.2, 0.3, 11)
    assert root == pytest.approx(RESONANT_R, abs=1e-8)
    assert len(samples) == 11


def test_locate_resonance_without_sign_change():
    with pytest.raises(NotOnResonantLeafError):
        locate_resonance(0.05, 0.15, 5)


def test_resonant_v3_datum():
    u = resolve_truncation(resonant_v3_symbol(1.0, 0.3))
    q = mass(u)
    assert abs(j_factor(u)) ** 2 == pytest.approx(q**3, rel=1e-10)
