"""Hankel operators H_u, K_u and their spectral analysis."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Any

import numpy as np
from scipy import linalg

from szego_lab.exceptions import (
    AmbiguousGroupingError,
    DegenerateSpectrumError,
    InconsistentInputsError,
    ZeroSymbolError,
)
from szego_lab.symbol import FourierSymbol, szego_project_product

GROUP_TOL = 1e-8
RANK_FLOOR = 1e-20
AMBIGUITY_FACTOR = 10.0


class Dominance(str, Enum):
    """Which eigenspace is one dimension larger at a singular value."""

    H_DOMINANT = "H"
    K_DOMINANT = "K"


@dataclass(frozen=True, eq=False)
class EigenGroup:
    """One clustered eigenvalue of H_u^2 or K_u^2 with an orthonormal basis."""

    value: float
    mult: int
    basis: np.ndarray

    def project(self, vector: np.ndarray) -> np.ndarray:
        """Orthogonal projection of a coefficient vector onto the eigenspace."""
        return self.basis @ (self.basis.conj().T @ vector)


@dataclass(frozen=True)
class SingularValue:
    """A merged singular value s^2 with the dimensions of E_u(s) and F_u(s)."""

    value: float
    dominance: Dominance
    dim_e: int
    dim_f: int
    h_index: int | None = None
    k_index: int | None = None
    angle: float | None = None

    @property
    def is_simple(self) -> bool:
        """One of the two eigenspaces is trivial and the other is a line."""
        return self.dim_e + self.dim_f == 1


@dataclass(frozen=True, eq=False)
class SpectralData:
    """Grouped spectra of H_u^2 and K_u^2 with dominance and angles.

    ``merged`` is the decreasing union of both spectra. Angles follow
    K_u(u_k) = sigma_k e^{i psi_k} u_k and rho_j u_j = e^{i phi_j} H_u(u_j).
    """

    h_eigs: tuple[EigenGroup, ...]
    k_eigs: tuple[EigenGroup, ...]
    merged: tuple[SingularValue, ...]
    trunc_dim: int
    group_tol: float = GROUP_TOL
    kernel_dim_hint: int = 0

    @property
    def dominance(self) -> list[Dominance]:
        """Dominance flag of each merged singular value."""
        return [value.dominance for value in self.merged]

    @property
    def h_angles(self) -> list[float]:
        """phi_j of the simple H-dominant values, in decreasing order."""
        return [
            value.angle
            for value in self.merged
            if value.dominance is Dominance.H_DOMINANT
            and value.is_simple
            and value.angle is not None
        ]

    @property
    def k_angles(self) -> list[float]:
        """psi_k of the simple K-dominant values, in decreasing order."""
        return [
            value.angle
            for value in self.merged
            if value.dominance is Dominance.K_DOMINANT
            and value.is_simple
            and value.angle is not None
        ]

    @property
    def h_values(self) -> np.ndarray:
        """Distinct eigenvalues rho_j^2 of H_u^2."""
        return np.array([group.value for group in self.h_eigs])

    @property
    def k_values(self) -> np.ndarray:
        """Distinct eigenvalues sigma_k^2 of K_u^2."""
        return np.array([group.value for group in self.k_eigs])

    @property
    def rank_h(self) -> int:
        """Numerical rank of H_u."""
        return sum(group.mult for group in self.h_eigs)

    @property
    def rank_k(self) -> int:
        """Numerical rank of K_u."""
        return sum(group.mult for group in self.k_eigs)

    def is_simple(self) -> bool:
        """Whether every merged singular value is simple."""
        return all(value.is_simple for value in self.merged)

    def values_of(self, dominance: Dominance) -> list[SingularValue]:
        """Merged values with the given dominance, decreasing."""
        return [value for value in self.merged if value.dominance is dominance]

    def h_group(self, value: SingularValue) -> EigenGroup:
        """Eigenspace E_u(s) behind a merged value."""
        if value.h_index is None:
            msg = f"No H-eigenspace at {value.value:.6e}."
            raise InconsistentInputsError(msg)
        return self.h_eigs[value.h_index]

    def k_group(self, value: SingularValue) -> EigenGroup:
        """Eigenspace F_u(s) behind a merged value."""
        if value.k_index is None:
            msg = f"No K-eigenspace at {value.value:.6e}."
            raise InconsistentInputsError(msg)
        return self.k_eigs[value.k_index]


@dataclass(frozen=True, eq=False)
class Projections:
    """Eigenprojections of u and Pi(|u|^2) (coefficient vectors)."""

    u_k_K: tuple[np.ndarray, ...]
    u_inf_K: np.ndarray
    w_k_K: tuple[np.ndarray, ...]
    w_inf_K: np.ndarray
    u_j_H: tuple[np.ndarray, ...]


@dataclass(frozen=True)
class NormFormulaReport:
    """Relative residuals of the closed-form projection norms."""

    h_residuals: tuple[float, ...]
    k_residuals: tuple[float, ...]

    @property
    def max_residual(self) -> float:
        """Largest residual over both families."""
        return max((*self.h_residuals, *self.k_residuals), default=0.0)


@dataclass(frozen=True)
class InterlacementReport:
    """Outcome of the interlacement chain check."""

    ok: bool
    worst_margin: float


def hankel_matrix(u: FourierSymbol) -> np.ndarray:
    """Matrix with entries u(j + l), zero when j + l >= N."""
    return linalg.hankel(u.coeffs)


def shifted_matrix(u: FourierSymbol) -> np.ndarray:
    """Matrix with entries u(j + l + 1), the Hankel matrix of S*u."""
    shifted = np.concatenate([u.coeffs[1:], np.zeros(1, dtype=np.complex128)])
    return linalg.hankel(shifted)


def hankel_square(u: FourierSymbol) -> np.ndarray:
    """Hermitian matrix of H_u^2."""
    mat = hankel_matrix(u)
    return mat @ mat.conj().T


def shifted_square(u: FourierSymbol) -> np.ndarray:
    """Hermitian matrix of K_u^2."""
    mat = shifted_matrix(u)
    return mat @ mat.conj().T


def apply_hankel(u: FourierSymbol, h: FourierSymbol) -> FourierSymbol:
    """Antilinear action H_u h = Pi(u conj(h))."""
    return szego_project_product(u, h)


def apply_hankel_vec(coeffs: np.ndarray, vec: np.ndarray) -> np.ndarray:
    """H_u on raw coefficient vectors of equal length."""
    return np.correlate(coeffs, vec, mode="full")[len(coeffs) - 1 :]


def apply_shifted(u: FourierSymbol, h: FourierSymbol) -> FourierSymbol:
    """Antilinear action K_u h = H_u(z h)."""
    n = u.trunc_dim
    shifted_u = np.concatenate([u.coeffs[1:], np.zeros(1, dtype=np.complex128)])
    return szego_project_product(FourierSymbol(shifted_u), h.resized(n))


def rank_one_residual(u: FourierSymbol) -> float:
    """Relative size of H_u^2 - K_u^2 - (.|u)u in operator norm."""
    h2 = hankel_square(u)
    scale = float(np.linalg.norm(h2, 2))
    if scale == 0.0:
        return 0.0
    residual = h2 - shifted_square(u) - np.outer(u.coeffs, u.coeffs.conj())
    return float(np.linalg.norm(residual, 2)) / scale


def _group(
    vectors: np.ndarray,
    values: np.ndarray,
    floor: float,
    group_tol: float,
) -> tuple[EigenGroup, ...]:
    """Cluster a decreasing eigenvalue list by relative gap."""
    count = int(np.count_nonzero(values > floor))
    groups = []
    start = 0
    while start < count:
        stop = start + 1
        while stop < count:
            gap = (values[stop - 1] - values[stop]) / values[stop - 1]
            if gap < group_tol:
                stop += 1
                continue
            if gap < AMBIGUITY_FACTOR * group_tol:
                msg = f"Eigenvalue gap {gap:.3e} is ambiguous at {values[stop]:.6e}."
                raise AmbiguousGroupingError(msg)
            break
        groups.append(
            EigenGroup(
                value=float(np.mean(values[start:stop])),
                mult=stop - start,
                basis=vectors[:, start:stop],
            )
        )
        start = stop
    return tuple(groups)


def _merge(
    h_groups: tuple[EigenGroup, ...],
    k_groups: tuple[EigenGroup, ...],
    group_tol: float,
) -> list[tuple[int | None, int | None]]:
    """Pair H- and K-eigenvalues that coincide within ``group_tol``."""
    entries = sorted(
        [(group.value, "h", index) for index, group in enumerate(h_groups)]
        + [(group.value, "k", index) for index, group in enumerate(k_groups)],
        key=lambda entry: -entry[0],
    )
    pairs: list[tuple[int | None, int | None]] = []
    previous: float | None = None
    for value, kind, index in entries:
        gap = math.inf if previous is None else (previous - value) / previous
        if gap < group_tol and pairs:
            h_index, k_index = pairs[-1]
            if (kind == "h" and h_index is not None) or (
                kind == "k" and k_index is not None
            ):
                msg = f"Two eigenvalues of one operator merged at {value:.6e}."
                raise AmbiguousGroupingError(msg)
            pairs[-1] = (index, k_index) if kind == "h" else (h_index, index)
        elif gap < AMBIGUITY_FACTOR * group_tol:
            msg = f"H/K eigenvalue gap {gap:.3e} is ambiguous at {value:.6e}."
            raise AmbiguousGroupingError(msg)
        else:
            pairs.append((index, None) if kind == "h" else (None, index))
        previous = value
    return pairs


def singular_spectrum(
    u: FourierSymbol,
    group_tol: float = GROUP_TOL,
    rank_floor: float = RANK_FLOOR,
) -> SpectralData:
    """Grouped spectra of H_u^2 and K_u^2 with dominance and Blaschke angles.

    Eigenpairs come from singular value decompositions of the Hankel matrices,
    which keep kernel eigenvalues near rank_floor instead of at round-off of
    the squared operators.

    Args:
        u: A nonzero symbol.
        group_tol: Relative gap below which eigenvalues are one cluster.
        rank_floor: Eigenvalues below rank_floor * rho_1^2 count as zero.

    Returns:
        The spectral data.

    Raises:
        ZeroSymbolError: If u vanishes.
        AmbiguousGroupingError: If a gap falls in the ambiguous band or the
            dimension count does not decide dominance.
    """
    if u.is_zero():
        msg = "Spectral analysis of the zero symbol."
        raise ZeroSymbolError(msg)
    h_mat = hankel_matrix(u)
    k_mat = shifted_matrix(u)
    h_left, h_sing, _ = linalg.svd(h_mat)
    k_left, k_sing, _ = linalg.svd(k_mat)
    h_vals = h_sing**2
    k_vals = k_sing**2
    floor = rank_floor * h_vals[0]
    h_groups = _group(h_left, h_vals, floor, group_tol)
    k_groups = _group(k_left, k_vals, floor, group_tol)

    merged = []
    for h_index, k_index in _merge(h_groups, k_groups, group_tol):
        h_group = h_groups[h_index] if h_index is not None else None
        k_group = k_groups[k_index] if k_index is not None else None
        dim_e = h_group.mult if h_group is not None else 0
        dim_f = k_group.mult if k_group is not None else 0
        group = h_group if h_group is not None else k_group
        assert group is not None
        value = group.value
        if dim_e == dim_f + 1:
            dominance = Dominance.H_DOMINANT
        elif dim_f == dim_e + 1:
            dominance = Dominance.K_DOMINANT
        else:
            msg = f"dim E = {dim_e}, dim F = {dim_f} at {value:.6e}."
            raise AmbiguousGroupingError(msg)

        angle = None
        if dim_e + dim_f == 1:
            if h_group is not None:
                u_j = h_group.project(u.coeffs)
                # rho u_j = e^{i phi} H_u u_j, so phi = -arg (H_u u_j | u_j).
                pairing = np.vdot(u_j, h_mat @ u_j.conj())
                angle = -float(np.angle(pairing)) if abs(pairing) > 0 else None
            elif k_group is not None:
                u_k = k_group.project(u.coeffs)
                pairing = np.vdot(u_k, k_mat @ u_k.conj())
                angle = float(np.angle(pairing)) if abs(pairing) > 0 else None
        merged.append(
            SingularValue(
                value=value,
                dominance=dominance,
                dim_e=dim_e,
                dim_f=dim_f,
                h_index=h_index,
                k_index=k_index,
                angle=angle,
            )
        )
    rank_k = sum(group.mult for group in k_groups)
    return SpectralData(
        h_eigs=h_groups,
        k_eigs=k_groups,
        merged=tuple(merged),
        trunc_dim=u.trunc_dim,
        group_tol=group_tol,
        kernel_dim_hint=u.trunc_dim - rank_k,
    )


def _check_consistent(u: FourierSymbol, sd: SpectralData) -> None:
    if sd.trunc_dim != u.trunc_dim:
        msg = f"Spectral data at N={sd.trunc_dim}, symbol at N={u.trunc_dim}."
        raise InconsistentInputsError(msg)


def eigen_projections(u: FourierSymbol, sd: SpectralData) -> Projections:
    """Project u and Pi(|u|^2) on the K_u^2 eigenspaces, and u on those of H_u^2.

    The kernel parts are obtained by subtraction.
    """
    _check_consistent(u, sd)
    coeffs = u.coeffs
    w = szego_project_product(u, u).coeffs
    u_k = tuple(group.project(coeffs) for group in sd.k_eigs)
    w_k = tuple(group.project(w) for group in sd.k_eigs)
    u_inf = coeffs - np.sum(u_k, axis=0) if u_k else coeffs.copy()
    w_inf = w - np.sum(w_k, axis=0) if w_k else w.copy()
    return Projections(
        u_k_K=u_k,
        u_inf_K=u_inf,
        w_k_K=w_k,
        w_inf_K=w_inf,
        u_j_H=tuple(group.project(coeffs) for group in sd.h_eigs),
    )


def angle_residual(u: FourierSymbol, sd: SpectralData) -> float:
    """Worst relative residual of the eigen-relations defining the angles."""
    h_mat = hankel_matrix(u)
    k_mat = shifted_matrix(u)
    worst = 0.0
    for value in sd.merged:
        if value.angle is None:
            continue
        s = math.sqrt(value.value)
        if value.dominance is Dominance.K_DOMINANT:
            vec = sd.k_group(value).project(u.coeffs)
            residual = k_mat @ vec.conj() - s * np.exp(1j * value.angle) * vec
        else:
            vec = sd.h_group(value).project(u.coeffs)
            residual = s * vec - np.exp(1j * value.angle) * (h_mat @ vec.conj())
        norm = float(np.linalg.norm(vec))
        if norm > 0:
            worst = max(worst, float(np.linalg.norm(residual)) / (s * norm))
    return worst


def _sigma_below(value: float, k_values: list[float]) -> float:
    below = [k for k in k_values if k < value]
    return max(below, default=0.0)


def norm_formula_check(u: FourierSymbol, sd: SpectralData) -> NormFormulaReport:
    """Compare projection norms with their closed-form products.

    For s in the H-dominant set with sigma(s) the largest K-dominant value
    below s (or 0):

        |u_s^H|^2 = (s^2 - sigma(s)^2) prod (s^2 - sigma(s')^2) / (s^2 - s'^2)
        |u_sigma(s)^K|^2 = (s^2 - sigma(s)^2)
            prod (sigma(s)^2 - s'^2) / (sigma(s)^2 - sigma(s')^2)

    with products over the other H-dominant values s'.

    Raises:
        DegenerateSpectrumError: If some singular value is not simple.
    """
    if not sd.is_simple():
        msg = "Norm formulas need simple singular values."
        raise DegenerateSpectrumError(msg)
    _check_consistent(u, sd)
    h_entries = sd.values_of(Dominance.H_DOMINANT)
    k_entries = sd.values_of(Dominance.K_DOMINANT)
    k_values = [entry.value for entry in k_entries]
    k_lookup = {entry.value: entry for entry in k_entries}

    h_residuals = []
    k_residuals = []
    for entry in h_entries:
        s2 = entry.value
        sigma2 = _sigma_below(s2, k_values)
        others = [other.value for other in h_entries if other is not entry]
        predicted_h = s2 - sigma2
        for t2 in others:
            predicted_h *= (s2 - _sigma_below(t2, k_values)) / (s2 - t2)
        u_j = sd.h_group(entry).project(u.coeffs)
        actual_h = float(np.linalg.norm(u_j) ** 2)
        h_residuals.append(abs(predicted_h - actual_h) / max(abs(actual_h), 1e-300))
        if sigma2 > 0:
            predicted_k = s2 - sigma2
            for t2 in others:
                predicted_k *= (sigma2 - t2) / (sigma2 - _sigma_below(t2, k_values))
            u_k = sd.k_group(k_lookup[sigma2]).project(u.coeffs)
            actual_k = float(np.linalg.norm(u_k) ** 2)
            k_residuals.append(
                abs(predicted_k - actual_k) / max(abs(actual_k), 1e-300)
            )
    return NormFormulaReport(tuple(h_residuals), tuple(k_residuals))


def interlacement_check(sd: SpectralData) -> InterlacementReport:
    """Check rho_1^2 >= sigma_1^2 >= rho_2^2 >= ... without two equalities in a row."""
    h_values = list(sd.h_values)
    k_values = list(sd.k_values)
    chain: list[float] = []
    for index in range(max(len(h_values), len(k_values))):
        chain.append(h_values[index] if index < len(h_values) else 0.0)
        chain.append(k_values[index] if index < len(k_values) else 0.0)
    if 0.0 in chain:
        chain = chain[: chain.index(0.0) + 1]
    if len(chain) < 2:  # noqa: PLR2004
        return InterlacementReport(ok=True, worst_margin=0.0)

    margins = [chain[i] - chain[i + 1] for i in range(len(chain) - 1)]
    tolerances = [
        sd.group_tol * max(chain[i], chain[i + 1]) for i in range(len(chain) - 1)
    ]
    ordered = all(m >= -tol for m, tol in zip(margins, tolerances))
    equal = [abs(m) <= tol for m, tol in zip(margins, tolerances)]
    no_double = not any(a and b for a, b in zip(equal, equal[1:]))
    return InterlacementReport(ok=ordered and no_double, worst_margin=min(margins))


def is_generic(sd: SpectralData, min_gap: float = 1e-3) -> bool:
    """Simple spectrum whose merged values are separated by min_gap * leading value."""
    if not sd.is_simple() or not sd.merged:
        return False
    values = [value.value for value in sd.merged] + [0.0]
    leading = values[0]
    return all(a - b >= min_gap * leading for a, b in zip(values, values[1:]))


def spectral_data_to_dict(sd: SpectralData) -> dict[str, Any]:
    """Serialize to ``{"h": [...], "k": [...], "dominance": [...]}``.

    Each entry is ``{"val": s^2, "mult": m, "angle": a}``; ``angle`` is None
    for values that are not simple or not dominant on that side.
    """

    def entries(groups: tuple[EigenGroup, ...], side: str) -> list[dict[str, Any]]:
        angles: dict[int, float | None] = {}
        for value in sd.merged:
            index = value.h_index if side == "h" else value.k_index
            dominant = (value.dominance is Dominance.H_DOMINANT) == (side == "h")
            if index is not None:
                angles[index] = value.angle if dominant else None
        return [
            {"val": group.value, "mult": group.mult, "angle": angles.get(index)}
            for index, group in enumerate(groups)
        ]

    return {
        "h": entries(sd.h_eigs, "h"),
        "k": entries(sd.k_eigs, "k"),
        "dominance": [value.dominance.value for value in sd.merged],
    }
