"""Conserved quantities, moments, resolvent functionals and identity suites."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
from scipy import linalg, optimize

from szego_lab.exceptions import (
    DegenerateSigmasError,
    InconsistentInputsError,
    NotOnResonantLeafError,
    ResonantXError,
)
from szego_lab.hankel import (
    Dominance,
    apply_hankel_vec,
    eigen_projections,
    hankel_matrix,
    hankel_square,
    interlacement_check,
    rank_one_residual,
    shifted_matrix,
    shifted_square,
    singular_spectrum,
)
from szego_lab.symbol import (
    FourierSymbol,
    RationalSymbol,
    resolve_truncation,
    szego_project_product,
)

if TYPE_CHECKING:
    from collections.abc import Sequence

    from szego_lab.hankel import Projections, SpectralData

logger = logging.getLogger(__name__)

RESONANCE_MARGIN = 1e-6
GRID_MARGIN = 1e-3
KERNEL_TOL = 1e-6
CROSSING_TOL = 1e-10
DEGENERATE_SIGMAS = 1e-12


@dataclass(frozen=True)
class ConservationReport:
    """Conserved quantities of one symbol.

    ``ells`` and ``xis`` pair each value with its sigma_k^2; ``xis`` only
    covers simple K-dominant values whose projection is not crossing.
    ``pairings`` holds (Pi(|u|^2) | u_k^K) for every K-eigenvalue.
    """

    mass: float
    momentum: float
    j: complex
    ells: tuple[tuple[float, float], ...]
    ell_inf: float
    xis: tuple[tuple[float, complex], ...]
    ell_inf_kernel: float = 0.0
    mults: tuple[int, ...] = ()
    uk_norms_sq: tuple[float, ...] = ()
    kernel_norm_sq: float = 0.0
    jbar_sum: complex = 0j
    pairings: tuple[complex, ...] = ()

    @property
    def hamiltonian(self) -> float:
        """|J|^2 / 2."""
        return abs(self.j) ** 2 / 2

    @property
    def sigma_sq(self) -> tuple[float, ...]:
        """The sigma_k^2 labels, decreasing."""
        return tuple(value for value, _ in self.ells)

    @property
    def ell_values(self) -> tuple[float, ...]:
        """The ell_k, in the order of ``sigma_sq``."""
        return tuple(value for _, value in self.ells)

    def residuals(self) -> dict[str, float]:
        """Relative residuals of the trace identities satisfied by the report."""
        q = self.mass
        j2 = abs(self.j) ** 2
        weighted = sum((q + s2) * ell for s2, ell in self.ells) + q * self.ell_inf
        momentum = sum(s2 * m for (s2, _), m in zip(self.ells, self.mults))
        return {
            "sum_ells": abs(sum(self.ell_values) + self.ell_inf - q**2)
            / max(1.0, q**2),
            "weighted_ells": abs(weighted - j2) / max(1.0, j2, q**3),
            "momentum_trace": abs(self.momentum - momentum) / max(1.0, self.momentum),
            "jbar": abs(self.j.conjugate() - self.jbar_sum) / max(1.0, abs(self.j)),
            "ell_inf_kernel": abs(self.ell_inf - self.ell_inf_kernel) / max(1.0, q**2),
        }


@dataclass(frozen=True)
class SeriesSample:
    """Resolvent functionals at one x.

    j0..j4 are J^(m)(x) = ((I - x H_u^2)^{-1} H_u^m(1) | 1), z = J^(1)(x), and
    kk, ki, kp are the K-side values ((I - x K_u^2)^{-1} 1 | 1),
    ((I - x K_u^2)^{-1} u | 1) and ((I - x K_u^2)^{-1} u | u).
    """

    x: float
    j0: float
    j1: complex
    j2: float
    j3: complex
    j4: float
    z: complex
    kk: float
    ki: complex
    kp: float
    r_val: float
    f_val: float


@dataclass(frozen=True)
class IdentityReport:
    """Maximum relative residual per identity."""

    residuals: dict[str, float] = field(default_factory=dict)
    x_grid: tuple[float, ...] = ()

    @property
    def max_residual(self) -> float:
        """Largest residual over all identities."""
        return max(self.residuals.values(), default=0.0)


@dataclass(frozen=True)
class StructuralReport:
    """Structural invariants of the spectral picture."""

    interlaced: bool
    alternating: bool
    rank_h: int
    rank_k: int
    rank_one_residual: float
    trace_residual: float
    mass_trace_residual: float

    def rank_matches(self, d: int) -> bool:
        """rank H_u + rank K_u = d."""
        return self.rank_h + self.rank_k == d


def mass(u: FourierSymbol) -> float:
    """Q = sum |u(n)|^2."""
    return float(np.sum(np.abs(u.coeffs) ** 2))


def momentum(u: FourierSymbol) -> float:
    """M = sum n |u(n)|^2."""
    return float(np.sum(np.arange(u.trunc_dim) * np.abs(u.coeffs) ** 2))


def j_factor(u: FourierSymbol) -> complex:
    """J = integral of |u|^2 u = (u | Pi(|u|^2))."""
    w = szego_project_product(u, u)
    return complex(np.vdot(w.coeffs, u.coeffs))


def hamiltonian(u: FourierSymbol) -> float:
    """The energy |J|^2 / 2."""
    return abs(j_factor(u)) ** 2 / 2


def ell(u: FourierSymbol, sd: SpectralData, proj: Projections) -> ConservationReport:
    """Compute Q, M, J and the ell_k, ell_inf of a symbol.

    ell_k = (2Q + sigma_k^2) |u_k^K|^2 - |w_k^K|^2 for every eigenvalue of
    K_u^2. ell_inf is computed as the sigma = 0 instance of the same formula
    and again as |u_inf^K|^2 (2Q - |u(0)|^2); the two must agree.

    Raises:
        InconsistentInputsError: If ``sd`` and ``proj`` do not belong to ``u``.
    """
    n = u.trunc_dim
    vectors = (*proj.u_k_K, *proj.w_k_K, *proj.u_j_H, proj.u_inf_K, proj.w_inf_K)
    if (
        sd.trunc_dim != n
        or len(proj.u_k_K) != len(sd.k_eigs)
        or len(proj.u_j_H) != len(sd.h_eigs)
        or any(vec.shape != (n,) for vec in vectors)
    ):
        msg = "Spectral data or projections do not match the symbol."
        raise InconsistentInputsError(msg)

    q = mass(u)
    j = j_factor(u)
    w = szego_project_product(u, u).coeffs
    norm_u = u.norm()

    ells = []
    norms = []
    for group, u_k, w_k in zip(sd.k_eigs, proj.u_k_K, proj.w_k_K):
        uk_sq = float(np.vdot(u_k, u_k).real)
        wk_sq = float(np.vdot(w_k, w_k).real)
        ells.append((group.value, (2 * q + group.value) * uk_sq - wk_sq))
        norms.append(uk_sq)

    kernel_sq = float(np.vdot(proj.u_inf_K, proj.u_inf_K).real)
    ell_inf = 2 * q * kernel_sq - float(np.vdot(proj.w_inf_K, proj.w_inf_K).real)
    ell_inf_kernel = kernel_sq * (2 * q - abs(u.coeffs[0]) ** 2)
    if abs(ell_inf - ell_inf_kernel) > KERNEL_TOL * max(1.0, q**2):
        msg = (
            f"Kernel term mismatch: {ell_inf:.6e} vs {ell_inf_kernel:.6e}; "
            "projections do not belong to this symbol."
        )
        raise InconsistentInputsError(msg)

    xis = []
    pairings = []
    jbar_sum = complex(np.conj(u.coeffs[0])) * kernel_sq
    for index, (group, u_k) in enumerate(zip(sd.k_eigs, proj.u_k_K)):
        pairing = complex(np.vdot(u_k, w))
        pairings.append(pairing)
        jbar_sum += pairing
        crossing = norms[index] <= (CROSSING_TOL * norm_u) ** 2
        if group.mult == 1 and not crossing:
            xis.append((group.value, pairing / norms[index]))

    return ConservationReport(
        mass=q,
        momentum=momentum(u),
        j=j,
        ells=tuple(ells),
        ell_inf=ell_inf,
        xis=tuple(xis),
        ell_inf_kernel=ell_inf_kernel,
        mults=tuple(group.mult for group in sd.k_eigs),
        uk_norms_sq=tuple(norms),
        kernel_norm_sq=kernel_sq,
        jbar_sum=jbar_sum,
        pairings=tuple(pairings),
    )


def conservation_report(u: FourierSymbol) -> ConservationReport:
    """Spectral analysis, projections and ``ell`` in one call."""
    if u.is_zero():
        return ConservationReport(0.0, 0.0, 0j, (), 0.0, ())
    sd = singular_spectrum(u)
    return ell(u, sd, eigen_projections(u, sd))


def v4_closed_form_ells(
    q: float,
    j2abs: float,
    sigma1_sq: float,
    sigma2_sq: float,
) -> tuple[float, float]:
    """Closed-form ell_1, ell_2 on V(4) from Q, |J|^2 and the two sigma^2."""
    gap = sigma1_sq - sigma2_sq
    if gap < DEGENERATE_SIGMAS:
        msg = f"sigma_1^2 - sigma_2^2 = {gap:.3e} is degenerate."
        raise DegenerateSigmasError(msg)
    ell_1 = (j2abs - q**2 * (q + sigma2_sq)) / gap
    ell_2 = (q**2 * (q + sigma1_sq) - j2abs) / gap
    return ell_1, ell_2


def moments(u: FourierSymbol, n_max: int) -> list[complex]:
    """J_n = (H_u^n(1) | 1) for n = 1..n_max."""
    if n_max < 2:  # noqa: PLR2004
        msg = f"n_max must be at least 2, got {n_max}."
        raise ValueError(msg)
    h = FourierSymbol.basis(0, u.trunc_dim).coeffs
    values = []
    for _ in range(n_max):
        h = apply_hankel_vec(u.coeffs, h)
        values.append(complex(h[0]))
    return values


def _eigenvalues(u: FourierSymbol) -> tuple[np.ndarray, np.ndarray]:
    h_sq = linalg.svdvals(hankel_matrix(u)) ** 2
    k_sq = linalg.svdvals(shifted_matrix(u)) ** 2
    floor = 1e-20 * h_sq[0]
    return h_sq[h_sq > floor], k_sq[k_sq > floor]


def check_resonance(
    u: FourierSymbol,
    x: float,
    margin: float = RESONANCE_MARGIN,
) -> None:
    """Raise if 1 - x s^2 nears zero for an eigenvalue s^2 of H_u^2 or K_u^2."""
    if u.is_zero() or x == 0:
        return
    h_sq, k_sq = _eigenvalues(u)
    distance = float(np.min(np.abs(1.0 - x * np.concatenate([h_sq, k_sq]))))
    if distance <= margin:
        msg = f"x = {x:.6g} is resonant (|1 - x s^2| = {distance:.3e})."
        raise ResonantXError(msg)


@dataclass(frozen=True, eq=False)
class Resolvents:
    """Resolvent vectors behind a SeriesSample.

    w0 = (I - x H_u^2)^{-1} 1, w1 = (I - x H_u^2)^{-1} u = H_u(w0),
    hw1 = H_u(w1), rk_u = (I - x K_u^2)^{-1} u.
    """

    sample: SeriesSample
    w0: np.ndarray
    w1: np.ndarray
    hw1: np.ndarray
    rk_u: np.ndarray


def resolvents(u: FourierSymbol, x: float) -> Resolvents:
    """Solve the H- and K-side resolvent systems at ``x`` (no resonance check).

    Raises:
        ResonantXError: If either system is singular.
    """
    n = u.trunc_dim
    coeffs = u.coeffs
    identity = np.eye(n, dtype=np.complex128)
    one = identity[:, 0]
    w = apply_hankel_vec(coeffs, one)
    w = apply_hankel_vec(coeffs, w)
    h3 = apply_hankel_vec(coeffs, w)
    h4 = apply_hankel_vec(coeffs, h3)

    rhs_h = np.column_stack([one, coeffs, w, h3, h4])
    rhs_k = np.column_stack([one, coeffs])
    try:
        sol_h = linalg.solve(identity - x * hankel_square(u), rhs_h, assume_a="her")
        sol_k = linalg.solve(identity - x * shifted_square(u), rhs_k, assume_a="her")
    except linalg.LinAlgError as exc:
        msg = f"x = {x:.6g} is resonant: the resolvent system is singular."
        raise ResonantXError(msg) from exc

    q = mass(u)
    j0 = float(sol_h[0, 0].real)
    j1 = complex(sol_h[0, 1])
    j2 = float(sol_h[0, 2].real)
    j3 = complex(sol_h[0, 3])
    j4 = float(sol_h[0, 4].real)
    sample = SeriesSample(
        x=x,
        j0=j0,
        j1=j1,
        j2=j2,
        j3=j3,
        j4=j4,
        z=j1,
        kk=float(sol_k[0, 0].real),
        ki=complex(sol_k[0, 1]),
        kp=float(np.vdot(coeffs, sol_k[:, 1]).real),
        r_val=(q**2 + x * abs(j3) ** 2 - x**2 * j4**2) / j0,
        f_val=(2 * q + x * j2**2 - x**2 * abs(j3) ** 2) / j0,
    )
    w1 = sol_h[:, 1]
    return Resolvents(
        sample=sample,
        w0=sol_h[:, 0],
        w1=w1,
        hw1=apply_hankel_vec(coeffs, w1),
        rk_u=sol_k[:, 1],
    )


def series_sample(
    u: FourierSymbol,
    x: float,
    resonance_margin: float = RESONANCE_MARGIN,
    *,
    check: bool = True,
) -> SeriesSample:
    """Evaluate the generating-series functionals at ``x``.

    R(x) = (Q^2 + x |J3|^2 - x^2 J4^2) / J0 and
    F(x) = (2Q + x J2^2 - x^2 |J3|^2) / J0 = 2Q - x R(x).

    Raises:
        ResonantXError: If ``check`` and x is within the resonance margin.
    """
    if check:
        check_resonance(u, x, resonance_margin)
    return resolvents(u, x).sample


def default_x_grid(sd: SpectralData, margin: float = GRID_MARGIN) -> list[float]:
    """Six points in [-2/sigma_1^2, 0) and six in (0, 0.9/sigma_1^2], off resonance."""
    values = np.concatenate([sd.h_values, sd.k_values])
    leading = float(sd.k_values[0]) if sd.k_eigs else float(sd.h_values[0])
    candidates = [-2.0 / leading * k / 6 for k in range(6, 0, -1)]
    candidates += [0.9 / leading * k / 6 for k in range(1, 7)]
    return [
        x for x in candidates if float(np.min(np.abs(1.0 - x * values))) > margin
    ]


def _relative(value: complex | float, reference: complex | float) -> float:
    return abs(value - reference) / max(1.0, abs(reference))


def _spectral_product(sd: SpectralData, x: float) -> float:
    num = math.prod((1 - x * g.value) ** g.mult for g in sd.k_eigs)
    den = math.prod((1 - x * g.value) ** g.mult for g in sd.h_eigs)
    return num / den


def identity_suite(
    u: FourierSymbol,
    x_grid: Sequence[float] | None = None,
) -> IdentityReport:
    """Residuals of the trace identities and the resolvent identities.

    Covers sum ell_k = Q^2, sum (Q + sigma^2) ell_k = |J|^2, the momentum trace,
    conj(J) = sum xi_k |u_k|^2 (kernel term included), and at each x:
    (I - xH^2)^{-1} u = J0 (I - xK^2)^{-1} u, K = J0 (1 - x|Ki|^2),
    1/J0 = 1 - x Kp, the K-resolvent lemma, the generating identity, F = 2Q - xR,
    Z = J_1 + x J3 and the spectral product for J0.
    """
    if u.is_zero():
        return IdentityReport()
    sd = singular_spectrum(u)
    report = ell(u, sd, eigen_projections(u, sd))
    residuals = dict(report.residuals())
    xs = list(x_grid) if x_grid is not None else default_x_grid(sd)
    q = report.mass
    j1 = complex(u.coeffs[0])
    for x in xs:
        check_resonance(u, x)
        res = resolvents(u, x)
        s = res.sample
        lhs_vec = res.w1
        rhs_vec = s.j0 * res.rk_u
        generating = sum(
            value / (1 - x * s2) for s2, value in report.ells
        ) + report.ell_inf
        resolvent_lhs = 2 + 2 * x * q - x**2 * s.r_val
        resolvent_rhs = (
            s.kk
            + 2 * x * (np.conj(j1) * s.ki).real
            + (1 - x * s.kp) * (1 + x * (2 * q - abs(j1) ** 2))
        )
        values = {
            "lien_res": float(np.linalg.norm(lhs_vec - rhs_vec))
            / max(1.0, float(np.linalg.norm(lhs_vec))),
            "kj": _relative(s.kk, s.j0 * (1 - x * abs(s.ki) ** 2)),
            "kj2": _relative(1 / s.j0, 1 - x * s.kp),
            "resolvent_k": _relative(resolvent_rhs, resolvent_lhs),
            "generating": _relative(generating, s.r_val),
            "f_definition": _relative(s.f_val, 2 * q - x * s.r_val),
            "z_expansion": _relative(s.z, j1 + x * s.j3),
            "j0_product": _relative(_spectral_product(sd, x), s.j0),
        }
        for name, value in values.items():
            residuals[name] = max(residuals.get(name, 0.0), value)
    return IdentityReport(residuals=residuals, x_grid=tuple(xs))


def generating_residues(
    u: FourierSymbol,
    x_grid: Sequence[float] | None = None,
) -> tuple[np.ndarray, float]:
    """Fit R(x) on {1/(1 - x sigma_k^2)} and a constant; return (ell_k, ell_inf)."""
    sd = singular_spectrum(u)
    xs = np.asarray(x_grid if x_grid is not None else default_x_grid(sd))
    basis = np.column_stack(
        [1.0 / (1.0 - xs * value) for value in sd.k_values] + [np.ones_like(xs)]
    )
    values = np.array([series_sample(u, float(x)).r_val for x in xs])
    fitted, *_ = linalg.lstsq(basis, values)
    return fitted[:-1], float(fitted[-1])


def structural_checks(u: FourierSymbol) -> StructuralReport:
    """Interlacement, dominance alternation, ranks and trace identities."""
    sd = singular_spectrum(u)
    flags = sd.dominance
    expected = [
        Dominance.H_DOMINANT if index % 2 == 0 else Dominance.K_DOMINANT
        for index in range(len(flags))
    ]
    q = mass(u)
    m = momentum(u)
    trace_h = sum(g.value * g.mult for g in sd.h_eigs)
    trace_k = sum(g.value * g.mult for g in sd.k_eigs)
    return StructuralReport(
        interlaced=interlacement_check(sd).ok,
        alternating=flags == expected,
        rank_h=sd.rank_h,
        rank_k=sd.rank_k,
        rank_one_residual=rank_one_residual(u),
        trace_residual=abs(q + m - trace_h) / max(1.0, q + m),
        mass_trace_residual=abs(q - (trace_h - trace_k)) / max(1.0, q),
    )


def v4_example_symbol(r: float, amplitude: complex = 1.0) -> RationalSymbol:
    """amplitude * z / (1 - p z)^2 with p = sqrt(r)."""
    p = math.sqrt(r)
    return RationalSymbol(np.array([0.0, amplitude]), np.array([1.0, -2 * p, p * p]))


def v4_example_invariants(r: float) -> dict[str, float]:
    """Closed forms of Q, |J|^2/Q^2 and sigma_1,2^2 for z / (1 - sqrt(r) z)^2."""
    root = (1 + r) * math.sqrt(1 + 6 * r + r * r)
    base = 1 + 4 * r + r * r
    denominator = 2 * (1 - r) ** 4
    return {
        "mass": (1 + r) / (1 - r) ** 3,
        "j_ratio": 4 * r / (1 - r) ** 4,
        "sigma1_sq": (base + root) / denominator,
        "sigma2_sq": (base - root) / denominator,
    }


def v4_example_ells(r: float) -> tuple[float, float]:
    """Numerical (ell_1, ell_2) of z / (1 - sqrt(r) z)^2."""
    report = conservation_report(resolve_truncation(v4_example_symbol(r)))
    values = report.ell_values
    return values[0], values[1]


def locate_resonance(
    r_min: float,
    r_max: float,
    points: int,
) -> tuple[float, list[tuple[float, float]]]:
    """Scan ell_1 over r and refine its sign change with Brent's method.

    Returns:
        The root r* and the scanned (r, ell_1) samples.
    """
    grid = np.linspace(r_min, r_max, points)
    samples = [(float(r), v4_example_ells(float(r))[0]) for r in grid]
    for (r_a, l_a), (r_b, l_b) in zip(samples, samples[1:]):
        if l_a == 0.0:
            return r_a, samples
        if l_a * l_b < 0:
            root = optimize.brentq(
                lambda r: v4_example_ells(r)[0], r_a, r_b, xtol=1e-14, rtol=1e-14
            )
            logger.info("ell_1 changes sign at r = %.12f", root)
            return float(root), samples
    msg = f"ell_1 keeps its sign on [{r_min}, {r_max}]."
    raise NotOnResonantLeafError(msg)


def v3_symbol(b: float, c: complex, p: complex) -> RationalSymbol:
    """b + c z / (1 - p z)."""
    return RationalSymbol(np.array([b, c - b * p]), np.array([1.0, -p]))


def resonant_v3_symbol(c: complex, p: complex) -> RationalSymbol:
    """Solve |J|^2 = Q^3 for a real b > 0 in b + c z / (1 - p z)."""

    def defect(b: float) -> float:
        u = resolve_truncation(v3_symbol(b, c, p))
        return abs(j_factor(u)) ** 2 - mass(u) ** 3

    scale = abs(c)
    try:
        b = optimize.brentq(defect, 1e-3 * scale, 10 * scale, xtol=1e-15, rtol=1e-14)
    except ValueError as exc:
        msg = f"No resonant b for c={c}, p={p}."
        raise NotOnResonantLeafError(msg) from exc
    logger.info("Resonant V(3) datum: b = %.12f", b)
    return v3_symbol(float(b), c, p)
