"""Hamiltonian flows on truncated symbols and the diagnostics run along them."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Literal

import numpy as np
from scipy import linalg, stats

from szego_lab.conservation import (
    check_resonance,
    ell,
    j_factor,
    mass,
    momentum,
    resolvents,
    series_sample,
)
from szego_lab.exceptions import (
    AmbiguousGroupingError,
    CrossingDetectedError,
    DegenerateSpectrumError,
    FitUnreliableError,
    InconsistentInputsError,
    NotOnResonantLeafError,
    RankMismatchError,
    StepSizeUnderflowError,
    TailNotResolvedError,
)
from szego_lab.hankel import (
    Dominance,
    eigen_projections,
    shifted_square,
    singular_spectrum,
)
from szego_lab.symbol import (
    MAX_TRUNCATION,
    TAIL_TOL,
    FourierSymbol,
    analytic_product,
    fit_rational,
    sobolev_norm_sq,
    szego_project_product,
)

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

    from szego_lab.conservation import ConservationReport
    from szego_lab.hankel import SpectralData

logger = logging.getLogger(__name__)

CROSSING_REL = 1e-10
VANISHING_REL = 1e-12
LEAF_TOL = 1e-8
FLAT_SLOPE = 1e-2
MIN_R_SQUARED = 0.99

# Dormand-Prince 5(4) tableau, error weights b5 - b4
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = np.array(
    [71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40]
)

_SAFETY = 0.9
_ALPHA = 0.7 / 5
_BETA = 0.4 / 5
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0


def vector_field_H(u: FourierSymbol) -> FourierSymbol:  # noqa: N802
    """X_H(u) = -2i J Pi(|u|^2) - i conj(J) u^2."""
    j = j_factor(u)
    w = szego_project_product(u, u).coeffs
    square = analytic_product(u, u).coeffs
    return FourierSymbol(-2j * j * w - 1j * np.conj(j) * square)


def vector_field_F(  # noqa: N802
    u: FourierSymbol,
    x: float,
    *,
    check: bool = True,
) -> FourierSymbol:
    """Symplectic gradient of F(x) = 2Q - x R(x).

    With w0 = (I - xH_u^2)^{-1} 1, w1 = (I - xH_u^2)^{-1} u and the J^(m)(x):

        X = -i/J0 [4u + x(4 J2 - 2F) w0 w1 - 2x^2 conj(J3) w1^2
                   - 2x^3 J3 (H_u w1)^2 - 4x^2 J3 H_u w1]

    Raises:
        ResonantXError: If ``check`` and x is resonant.
    """
    if u.is_zero():
        return FourierSymbol.zeros(u.trunc_dim)
    if check:
        check_resonance(u, x)
    res = resolvents(u, x)
    s = res.sample
    n = u.trunc_dim

    def product(a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return np.convolve(a, b)[:n]

    g = (
        4 * u.coeffs
        + x * (4 * s.j2 - 2 * s.f_val) * product(res.w0, res.w1)
        - 2 * x**2 * np.conj(s.j3) * product(res.w1, res.w1)
        - 2 * x**3 * s.j3 * product(res.hw1, res.hw1)
        - 4 * x**2 * s.j3 * res.hw1
    )
    return FourierSymbol(-1j * g / s.j0)


@dataclass(frozen=True)
class FieldSelector:
    """Which Hamiltonian drives the flow: "H" for |J|^2/2, "F" for F(x)."""

    kind: Literal["H", "F"] = "H"
    x: float = -0.5

    def __call__(self, u: FourierSymbol) -> FourierSymbol:
        """Evaluate the selected field (resonance checked once, in ``integrate``)."""
        if self.kind == "H":
            return vector_field_H(u)
        return vector_field_F(u, self.x, check=False)

    def label(self) -> str:
        """Short name for manifests."""
        return "H" if self.kind == "H" else f"F({self.x:g})"


@dataclass
class StepStats:
    """Step bookkeeping of one integration."""

    accepted: int = 0
    rejected: int = 0
    max_local_error: float = 0.0
    doublings: int = 0


class DormandPrinceStepper:
    """Embedded Runge-Kutta 5(4) with FSAL and PI step-size control.

    The local error estimate of each step is held below
    atol + rtol * max(|y|, |y_new|) in the l2 norm.
    """

    def __init__(
        self,
        rhs: Callable[[np.ndarray], np.ndarray],
        y0: np.ndarray,
        t0: float,
        rtol: float,
        atol: float,
    ) -> None:
        """Start at (t0, y0) with a step guessed from the initial slope."""
        self.rhs = rhs
        self.rtol = rtol
        self.atol = atol
        self.stats = StepStats()
        self.t = t0
        self.h = 0.0
        self._prev_error = 1.0
        self.reset(y0)

    def reset(self, y: np.ndarray) -> None:
        """Replace the state (after a truncation change) and refresh the first stage."""
        self.y = np.asarray(y, dtype=np.complex128)
        self._k1 = self.rhs(self.y)
        if self.h == 0.0:
            scale = self.atol + float(np.linalg.norm(self.y))
            slope = self.atol + float(np.linalg.norm(self._k1))
            self.h = 1e-2 * scale / slope

    def _stages(self, h: float) -> list[np.ndarray]:
        stages = [self._k1]
        for row in _A[1:]:
            increment = sum(coef * k for coef, k in zip(row, stages) if coef)
            stages.append(self.rhs(self.y + h * increment))
        return stages

    def step(self, t_stop: float) -> bool:
        """Attempt one step towards ``t_stop`` without passing it.

        Returns:
            True if the step was accepted.

        Raises:
            StepSizeUnderflowError: If the step shrinks below round-off of t.
        """
        direction = 1.0 if t_stop >= self.t else -1.0
        h = min(abs(self.h), abs(t_stop - self.t))
        if h < 1e-14 * max(1.0, abs(self.t)):
            msg = f"Step size {h:.3e} underflows at t = {self.t:.6f}."
            raise StepSizeUnderflowError(msg)
        signed = direction * h
        stages = self._stages(signed)
        y_new = self.y + signed * sum(b * k for b, k in zip(_B, stages) if b)
        estimate = signed * sum(e * k for e, k in zip(_E, stages) if e)
        local = float(np.linalg.norm(estimate))
        tolerance = self.atol + self.rtol * max(
            float(np.linalg.norm(self.y)), float(np.linalg.norm(y_new))
        )
        error = local / tolerance

        if error <= 1.0:
            factor = (
                _MAX_FACTOR
                if error == 0.0
                else _SAFETY * error**-_ALPHA * self._prev_error**_BETA
            )
            self._prev_error = max(error, 1e-4)
            self.t += signed
            self.y = y_new
            self._k1 = stages[-1]
            self.stats.accepted += 1
            self.stats.max_local_error = max(self.stats.max_local_error, local)
            if h == abs(self.h) or factor < 1.0:
                self.h = h * min(_MAX_FACTOR, max(_MIN_FACTOR, factor))
            return True

        self.stats.rejected += 1
        self.h = h * max(_MIN_FACTOR, _SAFETY * error ** -(1 / 5))
        logger.debug("Step rejected at t=%.6f (error ratio %.3e).", self.t, error)
        return False


@dataclass(frozen=True, eq=False)
class SampleAnalysis:
    """Per-sample spectral picture, conservation report, norms and pole fit.

    ``spectral`` and ``report`` are None where the grouping is ambiguous.
    """

    t: float
    trunc_dim: int
    spectral: SpectralData | None
    report: ConservationReport | None
    sobolev: dict[float, float]
    poles: np.ndarray
    f_values: dict[float, float] = field(default_factory=dict)
    crossing: bool = False


def analyse_state(
    t: float,
    u: FourierSymbol,
    class_d: int,
    s_list: Sequence[float],
    monitor_x: Sequence[float] = (),
    tail_tol: float = TAIL_TOL,
) -> SampleAnalysis:
    """Analyse one sample at the smallest power-of-two truncation resolving it."""
    trimmed = u.trimmed(tail_tol)
    sobolev = {s: sobolev_norm_sq(u, s) for s in s_list}
    try:
        poles = fit_rational(trimmed, class_d).poles
    except RankMismatchError:
        logger.debug("Pole fit skipped at t=%.6f.", t)
        poles = np.empty(0, dtype=np.complex128)
    f_values = {
        y: series_sample(trimmed, y, check=False).f_val for y in monitor_x
    }
    if u.is_zero():
        return SampleAnalysis(
            t, trimmed.trunc_dim, None, None, sobolev, poles, f_values
        )
    try:
        sd = singular_spectrum(trimmed)
        report = ell(trimmed, sd, eigen_projections(trimmed, sd))
    except (AmbiguousGroupingError, DegenerateSpectrumError, InconsistentInputsError):
        logger.warning("Spectral grouping failed at t=%.6f; sample excluded.", t)
        return SampleAnalysis(
            t, trimmed.trunc_dim, None, None, sobolev, poles, f_values, crossing=True
        )
    floor = (CROSSING_REL * trimmed.norm()) ** 2
    crossing = any(norm < floor for norm in report.uk_norms_sq)
    if crossing:
        logger.debug("Crossing flagged at t=%.6f.", t)
    return SampleAnalysis(
        t, trimmed.trunc_dim, sd, report, sobolev, poles, f_values, crossing
    )


@dataclass(eq=False)
class Trajectory:
    """Samples of one integration and their analyses."""

    times: np.ndarray
    states: list[FourierSymbol]
    samples: list[SampleAnalysis]
    field: FieldSelector
    step_stats: StepStats
    s_list: tuple[float, ...] = (1.0, 2.0)

    @property
    def reports(self) -> list[ConservationReport | None]:
        """Per-sample conservation reports."""
        return [sample.report for sample in self.samples]

    @property
    def sobolev(self) -> dict[float, np.ndarray]:
        """Map s to the squared H^s norms along the run."""
        return {
            s: np.array([sample.sobolev[s] for sample in self.samples])
            for s in self.s_list
        }

    @property
    def poles(self) -> list[np.ndarray]:
        """Fitted poles per sample (empty where the fit was skipped)."""
        return [sample.poles for sample in self.samples]

    def drift(self) -> dict[str, float]:
        """Maximal relative drift of every conserved quantity from the first sample.

        Covers Q, M, |J|, each sigma_k^2, each ell_k, ell_inf and the monitored
        F(y) values.
        """
        valid = [r for r in self.reports if r is not None]
        if not valid:
            return {}
        first = valid[0]
        q_sq = max(first.mass**2, 1e-300)
        leading = max(first.sigma_sq, default=1.0)

        def series(name: str, values: list[float], scale: float) -> None:
            drifts[name] = max(abs(v - values[0]) for v in values) / scale

        drifts: dict[str, float] = {}
        series("Q", [r.mass for r in valid], max(first.mass, 1e-300))
        series("M", [r.momentum for r in valid], max(first.momentum, 1.0))
        series("absJ", [abs(r.j) for r in valid], max(abs(first.j), 1e-300))
        labels = len(first.ells)
        for k in range(labels):
            usable = [r for r in valid if len(r.ells) == labels]
            series(f"sigma_sq_{k + 1}", [r.ells[k][0] for r in usable], leading)
            series(f"ell_{k + 1}", [r.ells[k][1] for r in usable], q_sq)
        series("ell_inf", [r.ell_inf for r in valid], q_sq)
        first_sample = self.samples[0]
        for y, value in first_sample.f_values.items():
            series(
                f"F({y:g})",
                [s.f_values[y] for s in self.samples],
                max(abs(value), 1e-300),
            )
        return drifts

    def columns(self) -> list[str]:
        """CSV column order."""
        first = next((r for r in self.reports if r is not None), None)
        labels = len(first.ells) if first is not None else 0
        pole_count = max((poles.size for poles in self.poles), default=0)
        return [
            "t",
            "Q",
            "M",
            "reJ",
            "imJ",
            *(f"H{s:g}" for s in self.s_list),
            *(f"sigma_{k + 1}" for k in range(labels)),
            *(f"ell_{k + 1}" for k in range(labels)),
            "ell_inf",
            *(f"pole_abs_{k + 1}" for k in range(pole_count)),
        ]

    def rows(self) -> list[dict[str, float | None]]:
        """One record per sample, keyed by ``columns()``; gaps are None."""
        columns = self.columns()
        records = []
        for state, sample in zip(self.states, self.samples):
            row: dict[str, float | None] = dict.fromkeys(columns)
            j = j_factor(state)
            row.update(
                t=sample.t,
                Q=mass(state),
                M=momentum(state),
                reJ=j.real,
                imJ=j.imag,
            )
            for s in self.s_list:
                row[f"H{s:g}"] = math.sqrt(sample.sobolev[s])
            report = sample.report
            if report is not None:
                for k, (s2, value) in enumerate(report.ells):
                    if f"sigma_{k + 1}" in row:
                        row[f"sigma_{k + 1}"] = math.sqrt(s2)
                        row[f"ell_{k + 1}"] = value
                row["ell_inf"] = report.ell_inf
            for k, pole in enumerate(sorted(np.abs(sample.poles), reverse=True)):
                row[f"pole_abs_{k + 1}"] = float(pole)
            records.append(row)
        return records


def _sample_times(T: float, sample_dt: float) -> np.ndarray:  # noqa: N803
    count = int(math.floor(abs(T) / sample_dt + 1e-9))
    times = math.copysign(sample_dt, T) * np.arange(count + 1)
    if abs(abs(times[-1]) - abs(T)) > 1e-12 * max(1.0, abs(T)):
        times = np.append(times, T)
    return times


def integrate(  # noqa: PLR0913
    u0: FourierSymbol,
    field: FieldSelector,
    T: float,  # noqa: N803
    rtol: float = 1e-10,
    atol: float = 1e-12,
    sample_dt: float = 1e-2,
    *,
    tail_tol: float = TAIL_TOL,
    max_n: int = MAX_TRUNCATION,
    class_d: int | None = None,
    s_list: Sequence[float] = (1.0, 2.0),
    monitor_x: Sequence[float] = (),
    workers: int = 1,
    analyse: bool = True,
) -> Trajectory:
    """Integrate du/dt = X(u) from t = 0 to T and analyse every sample.

    Steps are clipped to land on the sample times. Whenever the tail mass of
    the state exceeds ``tail_tol`` the truncation doubles, up to ``max_n``.

    Raises:
        StepSizeUnderflowError: If the step size collapses.
        TailNotResolvedError: If the state needs more than ``max_n`` modes.
        ResonantXError: If an F(x) field starts at a resonant x.
    """
    if not math.isfinite(T) or sample_dt <= 0:
        msg = f"Invalid horizon T={T} or sample_dt={sample_dt}."
        raise ValueError(msg)
    if field.kind == "F":
        check_resonance(u0, field.x)

    def rhs(y: np.ndarray) -> np.ndarray:
        return field(FourierSymbol(y)).coeffs

    times = _sample_times(T, sample_dt)
    stepper = DormandPrinceStepper(rhs, u0.coeffs, 0.0, rtol, atol)
    states = [u0]
    for target in times[1:]:
        while stepper.t != target:
            if not stepper.step(float(target)):
                continue
            if abs(target - stepper.t) <= 1e-13 * max(1.0, abs(target)):
                stepper.t = float(target)
            current = FourierSymbol(stepper.y)
            if current.tail_mass() > tail_tol:
                n = 2 * current.trunc_dim
                if n > max_n:
                    msg = f"Tail {current.tail_mass():.3e} unresolved at N={n // 2}."
                    raise TailNotResolvedError(msg)
                stepper.reset(current.resized(n).coeffs)
                stepper.stats.doublings += 1
                logger.info("Truncation doubled to %d at t=%.6f.", n, stepper.t)
        states.append(FourierSymbol(stepper.y))
    logger.debug(
        "Integration done: %d accepted, %d rejected steps.",
        stepper.stats.accepted,
        stepper.stats.rejected,
    )

    trajectory = Trajectory(
        times=times,
        states=states,
        samples=[],
        field=field,
        step_stats=stepper.stats,
        s_list=tuple(s_list),
    )
    if analyse:
        trajectory.samples = analyse_trajectory(
            trajectory, class_d=class_d, monitor_x=monitor_x, workers=workers
        )
    return trajectory


def analyse_trajectory(
    traj: Trajectory,
    class_d: int | None = None,
    monitor_x: Sequence[float] = (),
    workers: int = 1,
) -> list[SampleAnalysis]:
    """Analyse all samples, in parallel over ``workers`` threads."""
    if class_d is None:
        first = traj.states[0]
        if first.is_zero():
            class_d = 1
        else:
            sd = singular_spectrum(first)
            class_d = sd.rank_h + sd.rank_k

    def task(index: int) -> SampleAnalysis:
        return analyse_state(
            float(traj.times[index]),
            traj.states[index],
            class_d,
            traj.s_list,
            monitor_x,
        )

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        return list(pool.map(task, range(len(traj.states))))


@dataclass(frozen=True)
class V4ClosedForm:
    """Closed-form profile of y(t) = |u_1^K(t)|^2 (sigma_1^2 - sigma_2^2) / Q.

    y(t) = 2ab / ((a - b) + (a + b) cosh(tau (t - t0))) where -a < 0 < b are
    the roots of P(X) = c0 - 2X(3Q + 2 sigma_2^2) - X^2,
    c0 = 4(Q + sigma_2^2)(sigma_1^2 - sigma_2^2) - Q^2 and tau = Q sqrt(c0).
    """

    mass: float
    sigma1_sq: float
    sigma2_sq: float
    a: float
    b: float
    amp: float
    tau: float
    t0: float

    @property
    def p0(self) -> float:
        """P(0) = 4(Q + sigma_2^2)(sigma_1^2 - sigma_2^2) - Q^2."""
        q = self.mass
        return 4 * (q + self.sigma2_sq) * (self.sigma1_sq - self.sigma2_sq) - q**2

    def y(self, t: float | np.ndarray) -> float | np.ndarray:
        """Evaluate the profile."""
        return self.amp / (
            (self.a - self.b) + (self.a + self.b) * np.cosh(self.tau * (t - self.t0))
        )

    def observed(self, report: ConservationReport) -> float:
        """The quantity the profile predicts, read off a conservation report."""
        return report.uk_norms_sq[0] * (self.sigma1_sq - self.sigma2_sq) / self.mass


def v4_closed_form(u0: FourierSymbol) -> V4ClosedForm:
    """Build the closed-form solution for data on the leaf ell_1 = 0 of V(4).

    Raises:
        NotOnResonantLeafError: If ell_1 differs from 0 by more than 1e-8 Q^2.
        InconsistentInputsError: If u0 is not in V(4) or P(0) <= 0.
    """
    sd = singular_spectrum(u0)
    if sd.rank_h + sd.rank_k != 4 or len(sd.k_eigs) != 2:  # noqa: PLR2004
        msg = "Closed form needs a symbol of class V(4) with two K-eigenvalues."
        raise InconsistentInputsError(msg)
    report = ell(u0, sd, eigen_projections(u0, sd))
    q = report.mass
    (s1, ell_1), (s2, _) = report.ells
    if abs(ell_1) > LEAF_TOL * q**2:
        msg = f"ell_1 = {ell_1:.3e} is not zero."
        raise NotOnResonantLeafError(msg)

    beta = 3 * q + 2 * s2
    c0 = 4 * (q + s2) * (s1 - s2) - q**2
    if c0 <= 0:
        msg = f"P(0) = {c0:.3e} must be positive."
        raise InconsistentInputsError(msg)
    root = math.sqrt(beta**2 + c0)
    a = beta + root
    b = root - beta
    y0 = report.uk_norms_sq[0] * (s1 - s2) / q
    argument = (2 * a * b / y0 - (a - b)) / (a + b)
    shift = math.acosh(max(argument, 1.0)) / (q * math.sqrt(c0))
    growing = (report.j * report.pairings[0]).imag > 0
    return V4ClosedForm(
        mass=q,
        sigma1_sq=s1,
        sigma2_sq=s2,
        a=a,
        b=b,
        amp=2 * a * b,
        tau=q * math.sqrt(c0),
        t0=shift if growing else -shift,
    )


def _valid_triples(traj: Trajectory) -> list[int]:
    return [
        i
        for i in range(1, len(traj.samples) - 1)
        if all(traj.samples[j].report is not None for j in (i - 1, i, i + 1))
    ]


def projection_evolution_residual(traj: Trajectory, k: int) -> float:
    """Compare d/dt |u_k^K|^2 by central differences with 2 Im(J (w_k^K | u_k^K)).

    Applies to X_H trajectories. Returns the largest difference relative to
    the largest predicted rate (absolute when the rate vanishes).

    Raises:
        CrossingDetectedError: If u_k^K vanishes on a label with ell_k >= 0.
    """
    index = k - 1
    norm_floor = VANISHING_REL**2
    for sample, state in zip(traj.samples, traj.states):
        report = sample.report
        if report is None or index >= len(report.uk_norms_sq):
            continue
        if (
            report.uk_norms_sq[index] < norm_floor * state.norm() ** 2
            and report.ells[index][1] >= 0
        ):
            msg = f"u_{k}^K vanishes at t={sample.t:.6f} with ell_{k} >= 0."
            raise CrossingDetectedError(msg)

    differences = []
    predicted = []
    for i in _valid_triples(traj):
        before, here, after = (traj.samples[j].report for j in (i - 1, i, i + 1))
        assert before is not None and here is not None and after is not None
        dt = traj.times[i + 1] - traj.times[i - 1]
        rate = (after.uk_norms_sq[index] - before.uk_norms_sq[index]) / dt
        expected = 2 * (here.j * here.pairings[index]).imag
        differences.append(abs(rate - expected))
        predicted.append(abs(expected))
    if not differences:
        return 0.0
    scale = max(predicted)
    return max(differences) / scale if scale > 0 else max(differences)


def toeplitz_analytic(symbol: np.ndarray) -> np.ndarray:
    """Matrix of T_b for analytic b: lower-triangular Toeplitz with first column b."""
    first_row = np.zeros_like(symbol)
    first_row[0] = symbol[0]
    return linalg.toeplitz(symbol, first_row)


def lax_operator_h(u: FourierSymbol) -> np.ndarray:
    """B_u = -i (T_{conj(J) u} + T_{J conj(u)})."""
    t = toeplitz_analytic(np.conj(j_factor(u)) * u.coeffs)
    return -1j * (t + t.conj().T)


def lax_operator_f(u: FourierSymbol, x: float) -> np.ndarray:
    """B_u^x = -iA for the flow of F(x).

    A = [2I + (2 J2 - F)(x T_w0 T_w0* + x^2 T_w1 T_w1*)
         - 2x^2 (J3 T_w0 T_w1* + conj(J3) T_w1 T_w0*)] / J0
    """
    res = resolvents(u, x)
    s = res.sample
    t0 = toeplitz_analytic(res.w0)
    t1 = toeplitz_analytic(res.w1)
    a = (
        2 * np.eye(u.trunc_dim)
        + (2 * s.j2 - s.f_val)
        * (x * t0 @ t0.conj().T + x**2 * t1 @ t1.conj().T)
        - 2 * x**2 * (s.j3 * t0 @ t1.conj().T + np.conj(s.j3) * t1 @ t0.conj().T)
    ) / s.j0
    return -1j * a


def lax_residual(traj: Trajectory) -> float:
    """Largest |dK_u^2/dt - [B, K_u^2]| / |K_u^2| over interior samples.

    The derivative is a central difference; B matches the trajectory's field.
    """
    worst = 0.0
    for i in range(1, len(traj.states) - 1):
        n = max(traj.states[j].trunc_dim for j in (i - 1, i, i + 1))
        before, here, after = (traj.states[j].resized(n) for j in (i - 1, i, i + 1))
        k2 = shifted_square(here)
        scale = float(np.linalg.norm(k2, 2))
        if scale == 0.0:
            continue
        derivative = (shifted_square(after) - shifted_square(before)) / (
            traj.times[i + 1] - traj.times[i - 1]
        )
        if traj.field.kind == "H":
            b = lax_operator_h(here)
        else:
            b = lax_operator_f(here, traj.field.x)
        residual = derivative - (b @ k2 - k2 @ b)
        worst = max(worst, float(np.linalg.norm(residual, 2)) / scale)
    return worst


@dataclass(frozen=True)
class AngleTrace:
    """Unwrapped Blaschke angle of one K-eigenvalue and its rate residual."""

    times: np.ndarray
    angles: np.ndarray
    residual: float


def _k_angle(sample: SampleAnalysis, index: int) -> tuple[float, complex] | None:
    sd = sample.spectral
    report = sample.report
    if sd is None or report is None or sample.crossing or index >= len(sd.k_eigs):
        return None
    entry = next((v for v in sd.merged if v.k_index == index), None)
    if (
        entry is None
        or entry.dominance is not Dominance.K_DOMINANT
        or not entry.is_simple
        or entry.angle is None
    ):
        return None
    norm = report.uk_norms_sq[index]
    return entry.angle, report.j * report.pairings[index] / norm


def blaschke_angle_trace(traj: Trajectory, k: int) -> AngleTrace:
    """Track psi_k(t) and compare its rate with 2 Re(J xi_k).

    Crossing samples are skipped; runs of valid consecutive samples are
    unwrapped and differenced separately.

    Raises:
        CrossingDetectedError: If no run of three valid samples exists.
    """
    index = k - 1
    values = [_k_angle(sample, index) for sample in traj.samples]
    runs: list[list[int]] = []
    current: list[int] = []
    for i, value in enumerate(values):
        if value is None:
            if current:
                runs.append(current)
            current = []
        else:
            current.append(i)
    if current:
        runs.append(current)
    runs = [run for run in runs if len(run) >= 3]  # noqa: PLR2004
    if not runs:
        msg = f"No three consecutive simple samples for psi_{k}."
        raise CrossingDetectedError(msg)

    times = []
    angles = []
    differences = []
    predicted = []
    for run in runs:
        t = traj.times[run]
        entries = [value for value in (values[i] for i in run) if value is not None]
        psi = np.unwrap([angle for angle, _ in entries])
        rate = 2 * np.array([jxi.real for _, jxi in entries])
        derivative = (psi[2:] - psi[:-2]) / (t[2:] - t[:-2])
        differences.extend(np.abs(derivative - rate[1:-1]))
        predicted.extend(np.abs(rate[1:-1]))
        times.extend(t)
        angles.extend(psi)
    scale = max(predicted)
    worst = max(differences)
    return AngleTrace(
        times=np.array(times),
        angles=np.array(angles),
        residual=worst / scale if scale > 0 else worst,
    )


@dataclass(frozen=True)
class GrowthReport:
    """Log-linear fits of Sobolev norms and pole distances on the trailing half.

    ``slopes`` are d/dt log |u|_{H^s}^2; ``pole_slopes`` are d/dt log(1 - |p|)
    per modulus-ordered pole track.
    """

    slopes: dict[float, float]
    r_squared: dict[float, float]
    pole_slopes: tuple[float, ...]
    escaping_pole: int | None
    bounded_max_modulus: float | None
    pole_tracks: np.ndarray


def _fit(
    times: np.ndarray,
    values: np.ndarray,
    label: str,
    *,
    strict: bool = True,
) -> tuple[float, float]:
    if np.ptp(values) == 0.0:
        return 0.0, 1.0
    fit = stats.linregress(times, values)
    r_squared = float(fit.rvalue) ** 2
    if strict and abs(fit.slope) >= FLAT_SLOPE and r_squared < MIN_R_SQUARED:
        msg = f"{label}: slope {fit.slope:.3e} with R^2 = {r_squared:.4f}."
        raise FitUnreliableError(msg)
    return float(fit.slope), r_squared


def growth_and_poles(traj: Trajectory, s_list: Sequence[float]) -> GrowthReport:
    """Fit Sobolev growth and pole escape on the trailing half of the run.

    Raises:
        FitUnreliableError: If a non-flat Sobolev fit has R^2 below 0.99.
            Pole tracks are fitted without that test.
    """
    times = np.abs(traj.times)
    tail = times >= times[-1] / 2
    slopes = {}
    r_squared = {}
    for s in s_list:
        norms = np.array([sample.sobolev[s] for sample in traj.samples])
        slopes[s], r_squared[s] = _fit(times[tail], np.log(norms[tail]), f"H^{s:g}")

    counts = [poles.size for poles in traj.poles]
    width = max(set(counts), key=counts.count) if counts else 0
    keep = np.array([count == width for count in counts]) & (width > 0)
    tracks = np.array(
        [np.sort(np.abs(poles))[::-1] for poles in traj.poles if poles.size == width]
    )
    if width == 0 or tracks.size == 0:
        return GrowthReport(slopes, r_squared, (), None, None, np.empty((0, 0)))

    selected = keep & tail
    pole_slopes = tuple(
        _fit(
            times[selected],
            np.log1p(-tracks[tail[keep]][:, p]),
            f"pole {p + 1}",
            strict=False,
        )[0]
        for p in range(width)
    )
    escaping = int(np.argmin(pole_slopes)) if min(pole_slopes) < -FLAT_SLOPE else None
    others = [p for p in range(width) if p != escaping]
    bounded = float(np.max(tracks[:, others])) if others else None
    return GrowthReport(slopes, r_squared, pole_slopes, escaping, bounded, tracks)
