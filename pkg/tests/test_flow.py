"""Tests for the Hamiltonian flows and the diagnostics along them."""

import numpy as np
import pytest

from szego_lab.conservation import conservation_report, v4_example_symbol
from szego_lab.exceptions import (
    InconsistentInputsError,
    NotOnResonantLeafError,
    ResonantXError,
    TailNotResolvedError,
)
from szego_lab.flow import (
    DormandPrinceStepper,
    FieldSelector,
    blaschke_angle_trace,
    growth_and_poles,
    integrate,
    lax_residual,
    projection_evolution_residual,
    v4_closed_form,
    vector_field_F,
    vector_field_H,
)
from szego_lab.hankel import hankel_square, shifted_square
from szego_lab.symbol import FourierSymbol, RationalSymbol, resolve_truncation
from tests.settings import DRIFT_TOL, RESONANT_R, TURBULENT_AMPLITUDE


def simple_pole(p):
    return resolve_truncation(RationalSymbol(np.array([1.0]), np.array([1.0, -p])))


@pytest.fixture(scope="module")
def resonant_v4():
    return resolve_truncation(v4_example_symbol(RESONANT_R, TURBULENT_AMPLITUDE))


@pytest.fixture(scope="module")
def resonant_run(resonant_v4):
    return integrate(
        resonant_v4.trimmed(),
        FieldSelector("H"),
        0.5,
        sample_dt=0.01,
        class_d=4,
    )


def test_stepper_on_rotation():
    """y' = i y is integrated to e^{i t} within tolerance."""
    y0 = np.array([1.0 + 0j])
    stepper = DormandPrinceStepper(lambda y: 1j * y, y0, 0.0, 1e-12, 1e-14)
    while stepper.t != 2.0:
        stepper.step(2.0)
    assert stepper.y[0] == pytest.approx(np.exp(2j), abs=1e-10)
    assert stepper.stats.accepted > 0


def test_fields_vanish_at_zero():
    zero = FourierSymbol.zeros(16)
    assert vector_field_H(zero).is_zero()
    assert vector_field_F(zero, -0.5).is_zero()


def test_field_f_at_origin_is_rotation():
    """F(0) = 2Q generates u -> e^{-4it} u."""
    u = simple_pole(0.5)
    assert np.allclose(vector_field_F(u, 0.0).coeffs, -4j * u.coeffs)


def test_field_f_rejects_resonant_x():
    with pytest.raises(ResonantXError):
        vector_field_F(simple_pole(0.5), 9 / 16)
    with pytest.raises(ResonantXError):
        integrate(simple_pole(0.5), FieldSelector("F", 9 / 16), 0.1)


def test_field_labels():
    assert FieldSelector().label() == "H"
    assert FieldSelector("F", -0.5).label() == "F(-0.5)"


def test_sample_times_land_on_horizon():
    traj = integrate(simple_pole(0.3), FieldSelector("H"), 0.25, sample_dt=0.1)
    assert np.allclose(traj.times, [0.0, 0.1, 0.2, 0.25])
    backwards = integrate(simple_pole(0.3), FieldSelector("H"), -0.2, sample_dt=0.1)
    assert np.allclose(backwards.times, [0.0, -0.1, -0.2])


def test_invalid_horizon():
    with pytest.raises(ValueError, match="Invalid horizon"):
        integrate(simple_pole(0.3), FieldSelector("H"), float("nan"))


def test_h_flow_conserves(resonant_run):
    drift = resonant_run.drift()
    for name in ("Q", "M", "absJ", "sigma_sq_1", "sigma_sq_2", "ell_1", "ell_2"):
        assert drift[name] < DRIFT_TOL, name


def test_f_flow_conserves_monitored_values():
    u = resolve_truncation(
        RationalSymbol(np.array([1.0, 0.6]), np.array([1.0, -0.4]))
    ).trimmed()
    traj = integrate(
        u, FieldSelector("F", -0.5), 0.2, sample_dt=0.05, monitor_x=(0.2,)
    )
    drift = traj.drift()
    assert drift["Q"] < DRIFT_TOL
    assert drift["F(0.2)"] < 1e-6


def test_rows_follow_columns(resonant_run):
    columns = resonant_run.columns()
    assert columns[:5] == ["t", "Q", "M", "reJ", "imJ"]
    assert {"H1", "H2", "sigma_1", "sigma_2", "ell_inf"} <= set(columns)
    rows = resonant_run.rows()
    assert len(rows) == len(resonant_run.times)
    assert all(list(row) == columns for row in rows)


def test_truncation_limit():
    u = simple_pole(0.5).trimmed()
    with pytest.raises(TailNotResolvedError):
        integrate(u, FieldSelector("H"), 0.1, tail_tol=1e-40, max_n=u.trunc_dim)


def test_lax_residual_h(resonant_v4):
    traj = integrate(resonant_v4.trimmed(), FieldSelector("H"), 0.01, sample_dt=1e-3)
    assert lax_residual(traj) < 1e-3


def test_lax_residual_f_at_origin():
    """For F(0) the Lax operator is -2i and K_u^2 is invariant."""
    traj = integrate(
        simple_pole(0.5).trimmed(), FieldSelector("F", 0.0), 0.01, sample_dt=1e-3
    )
    assert lax_residual(traj) < 1e-6


def test_closed_form_matches_initial_datum(resonant_v4):
    closed = v4_closed_form(resonant_v4)
    assert closed.p0 > 0
    assert closed.tau > 0
    assert closed.a > 0 < closed.b
    observed = closed.observed(conservation_report(resonant_v4))
    assert closed.y(0.0) == pytest.approx(observed, rel=1e-8)


def test_closed_form_profile_along_run(resonant_run):
    closed = v4_closed_form(resonant_run.states[0])
    peak = closed.y(closed.t0)
    for sample in resonant_run.samples:
        assert sample.report is not None
        assert closed.observed(sample.report) == pytest.approx(
            closed.y(sample.t), abs=1e-4 * peak
        )


def test_closed_form_requirements():
    with pytest.raises(NotOnResonantLeafError):
        v4_closed_form(resolve_truncation(v4_example_symbol(0.25)))
    with pytest.raises(InconsistentInputsError):
        v4_closed_form(simple_pole(0.5))


def test_projection_evolution(resonant_run):
    assert projection_evolution_residual(resonant_run, 1) < 1e-2


def test_angle_trace(resonant_run):
    trace = blaschke_angle_trace(resonant_run, 2)
    assert trace.times.size == trace.angles.size
    assert trace.residual < 1e-2


@pytest.mark.slow
def test_resonant_growth():
    """The resonant V(4) datum grows in H^1 while one pole escapes the disc."""
    u0 = resolve_truncation(v4_example_symbol(RESONANT_R, TURBULENT_AMPLITUDE))
    traj = integrate(u0.trimmed(), FieldSelector("H"), 4.0, sample_dt=0.05, class_d=4)
    report = growth_and_poles(traj, (1.0, 2.0))
    assert report.slopes[1.0] > 0
    assert report.slopes[2.0] > report.slopes[1.0]
    assert report.escaping_pole is not None
    assert report.pole_slopes[report.escaping_pole] == pytest.approx(
        -report.slopes[1.0], rel=0.15
    )


@pytest.mark.slow
def test_bounded_v4_control():
    """Off the leaf ell_1 = 0 the V(4) orbit stays bounded in H^1."""
    u0 = resolve_truncation(v4_example_symbol(0.1, TURBULENT_AMPLITUDE))
    assert min(abs(ell) for ell in conservation_report(u0).ell_values) > 1e-8
    traj = integrate(u0.trimmed(), FieldSelector("H"), 4.0, sample_dt=0.05, class_d=4)
    report = growth_and_poles(traj, (1.0,))
    assert abs(report.slopes[1.0]) < 1e-2


def test_time_reversal(generic_v4):
    """Integrating to T and back by -T returns the initial datum."""
    u0 = generic_v4.trimmed()
    forward = integrate(u0, FieldSelector("H"), 0.1, rtol=1e-10, analyse=False)
    backward = integrate(
        forward.states[-1], FieldSelector("H"), -0.1, rtol=1e-10, analyse=False
    )
    u1 = backward.states[-1]
    n = max(u0.trunc_dim, u1.trunc_dim)
    error = (u1.resized(n) - u0.resized(n)).norm()
    assert error <= 100 * 1e-10 * u0.norm()


def numerical_rank(mat):
    values = np.linalg.eigvalsh(mat)
    return int(np.sum(values > 1e-10 * values.max()))


def test_rank_is_constant_along_flow(generic_v4):
    traj = integrate(
        generic_v4.trimmed(), FieldSelector("H"), 0.1, sample_dt=0.02, analyse=False
    )
    h_ranks = {numerical_rank(hankel_square(state)) for state in traj.states}
    k_ranks = {numerical_rank(shifted_square(state)) for state in traj.states}
    assert h_ranks == {2}
    assert k_ranks == {2}
