"""Inverse spectral reconstruction of u from interlaced singular values and angles."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any

import numpy as np
from scipy import linalg

from szego_lab.exceptions import (
    DegenerateSpectrumError,
    InconsistentInputsError,
    NumericalSingularityError,
    RankMismatchError,
    TailNotResolvedError,
    UnsupportedMultiplicityError,
)
from szego_lab.hankel import (
    RANK_FLOOR,
    hankel_matrix,
    shifted_matrix,
    singular_spectrum,
)
from szego_lab.symbol import MAX_TRUNCATION, TAIL_TOL, FourierSymbol

if TYPE_CHECKING:
    from szego_lab.hankel import SpectralData

logger = logging.getLogger(__name__)

MIN_GAP = 1e-10
MAX_CONDITION = 1e12
# Radius 0.5 loses coefficients past n ~ 50 to the r^-n rescaling.
EVAL_RADIUS = 0.999


@dataclass(frozen=True, eq=False)
class InverseSpectralInput:
    """Singular values s_1 > ... > s_2q >= 0 and one angle per value.

    Odd positions (s_1, s_3, ...) are H-dominant with angles phi_j; even
    positions are K-dominant with angles psi_k.
    """

    s: np.ndarray
    angles: np.ndarray

    def __post_init__(self) -> None:
        """Validate ordering, sign and shape."""
        s = np.asarray(self.s, dtype=np.float64).ravel()
        angles = np.asarray(self.angles, dtype=np.float64).ravel()
        if s.size == 0 or s.size % 2:
            msg = f"Expected an even, nonzero number of values, got {s.size}."
            raise InconsistentInputsError(msg)
        if angles.shape != s.shape:
            msg = f"{angles.size} angles for {s.size} values."
            raise InconsistentInputsError(msg)
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(angles))):
            msg = "Values and angles must be finite."
            raise InconsistentInputsError(msg)
        if s[-1] < 0 or np.any(np.diff(s) > -MIN_GAP):
            msg = f"Values must decrease strictly by at least {MIN_GAP} to s_2q >= 0."
            raise InconsistentInputsError(msg)
        s.setflags(write=False)
        angles.setflags(write=False)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "angles", angles)

    @property
    def q(self) -> int:
        """Size of the inverse-formula matrix."""
        return self.s.size // 2

    @property
    def expected_rank(self) -> int:
        """The d of the class V(d) the reconstruction must land in."""
        return 2 * self.q - 1 if self.s[-1] == 0 else 2 * self.q

    def phase_shifted(
        self,
        theta: float,
        *,
        compensate: bool = True,
    ) -> InverseSpectralInput:
        """Shift every phi_j by theta, and every psi_k by -theta when ``compensate``.

        The compensated shift reconstructs e^{i theta} u; the bare one
        reconstructs e^{i theta} u(e^{i theta} z).
        """
        shift = np.zeros_like(self.angles)
        shift[0::2] = theta
        if compensate:
            shift[1::2] = -theta
        return InverseSpectralInput(self.s, self.angles + shift)

    def scaled(self, factor: float) -> InverseSpectralInput:
        """Multiply every value by ``factor`` > 0."""
        return InverseSpectralInput(self.s * factor, self.angles)

    @classmethod
    def from_spectral_data(cls, sd: SpectralData) -> InverseSpectralInput:
        """Read values and angles off a simple spectrum.

        Raises:
            DegenerateSpectrumError: If a value is multiple or has no angle.
        """
        if not sd.is_simple():
            msg = "Inverse reconstruction needs simple singular values."
            raise DegenerateSpectrumError(msg)
        values = []
        angles = []
        for entry in sd.merged:
            if entry.angle is None:
                msg = f"No angle at s^2 = {entry.value:.6e}."
                raise DegenerateSpectrumError(msg)
            values.append(math.sqrt(entry.value))
            angles.append(entry.angle)
        if len(values) % 2:
            values.append(0.0)
            angles.append(0.0)
        return cls(np.array(values), np.array(angles))

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> InverseSpectralInput:
        """Build from ``{"s": [...], "angles": [...]}`` or a spectral-data document.

        Raises:
            UnsupportedMultiplicityError: If an eigenvalue has multiplicity >= 2.
            InconsistentInputsError: If the document is malformed.
        """
        if "s" in data:
            try:
                return cls(np.array(data["s"]), np.array(data["angles"]))
            except (KeyError, TypeError, ValueError) as exc:
                msg = f"Malformed inverse input: {exc}"
                raise InconsistentInputsError(msg) from exc
        try:
            entries = [*data["h"], *data["k"]]
            if any(int(entry["mult"]) != 1 for entry in entries):
                msg = "Only simple singular values can be inverted."
                raise UnsupportedMultiplicityError(msg)
            entries.sort(key=lambda entry: -float(entry["val"]))
            values = [math.sqrt(float(entry["val"])) for entry in entries]
            angles = [entry["angle"] for entry in entries]
        except (KeyError, TypeError, ValueError) as exc:
            msg = f"Malformed spectral data: {exc}"
            raise InconsistentInputsError(msg) from exc
        if any(angle is None for angle in angles):
            msg = "Every singular value needs an angle."
            raise InconsistentInputsError(msg)
        if len(values) % 2:
            values.append(0.0)
            angles.append(0.0)
        return cls(np.array(values), np.array(angles, dtype=np.float64))

    def to_dict(self) -> dict[str, list[float]]:
        """JSON form ``{"s": [...], "angles": [...]}``."""
        return {"s": self.s.tolist(), "angles": self.angles.tolist()}


def _c_stack(inp: InverseSpectralInput, zs: np.ndarray) -> np.ndarray:
    s_odd = inp.s[0::2]
    s_even = inp.s[1::2]
    phase = np.exp(1j * (inp.angles[0::2][:, None] + inp.angles[1::2][None, :]))
    denominator = s_odd[:, None] ** 2 - s_even[None, :] ** 2
    second = s_even[None, :] * phase
    return (s_odd[None, :, None] - zs[:, None, None] * second[None]) / denominator


def _check_condition(stack: np.ndarray, zs: np.ndarray) -> None:
    cond = np.linalg.cond(stack)
    worst = int(np.argmax(cond))
    if not np.isfinite(cond[worst]) or cond[worst] > MAX_CONDITION:
        msg = f"C(z) condition number {cond[worst]:.3e} at z = {zs[worst]:.6g}."
        raise NumericalSingularityError(msg)


def c_matrix(inp: InverseSpectralInput, z: complex) -> np.ndarray:
    """The q x q matrix C(z) of the inverse formula.

    C_jk = (s_2j-1 - z s_2k e^{i(phi_j + psi_k)}) / (s_2j-1^2 - s_2k^2).

    Raises:
        ValueError: If z is outside the open unit disc.
        NumericalSingularityError: If the condition number exceeds 1e12.
    """
    if abs(z) >= 1:
        msg = f"z = {z} is not in the open unit disc."
        raise ValueError(msg)
    zs = np.array([z], dtype=np.complex128)
    stack = _c_stack(inp, zs)
    _check_condition(stack, zs)
    return stack[0]


def condition_number(inp: InverseSpectralInput, z: complex) -> float:
    """2-norm condition number of C(z)."""
    return float(np.linalg.cond(c_matrix(inp, z)))


def evaluate(inp: InverseSpectralInput, zs: np.ndarray) -> np.ndarray:
    """u(z) = sum_{j,k} [C(z)^{-1}]_{jk} e^{i phi_k} at each z in ``zs``."""
    zs = np.asarray(zs, dtype=np.complex128).ravel()
    stack = _c_stack(inp, zs)
    _check_condition(stack, zs)
    rhs = np.broadcast_to(np.exp(1j * inp.angles[0::2]), (zs.size, inp.q))
    solution = np.linalg.solve(stack, rhs[..., None])[..., 0]
    return solution.sum(axis=1)


def _numerical_rank(u: FourierSymbol, rank_floor: float) -> int:
    h_sq = linalg.svdvals(hankel_matrix(u)) ** 2
    k_sq = linalg.svdvals(shifted_matrix(u)) ** 2
    floor = rank_floor * h_sq[0]
    return int(np.count_nonzero(h_sq > floor) + np.count_nonzero(k_sq > floor))


def reconstruct(
    inp: InverseSpectralInput,
    n: int,
    radius: float = EVAL_RADIUS,
    tail_tol: float = TAIL_TOL,
    max_n: int = MAX_TRUNCATION,
    rank_floor: float = RANK_FLOOR,
) -> FourierSymbol:
    """Recover the Fourier coefficients of u by a sampled Cauchy integral.

    u is sampled at 2N points of the circle of the given radius; a scaled DFT
    returns the first N coefficients, and N doubles until the tail is resolved.

    Raises:
        TailNotResolvedError: If the tail stays above ``tail_tol`` at ``max_n``.
        RankMismatchError: If rank H_u + rank K_u differs from the expected class.
    """
    while True:
        samples = 2 * n
        zs = radius * np.exp(2j * np.pi * np.arange(samples) / samples)
        coeffs = np.fft.fft(evaluate(inp, zs))[:n] / samples
        u = FourierSymbol(coeffs / radius ** np.arange(n))
        if u.tail_mass() <= tail_tol:
            break
        if 2 * n > max_n:
            msg = f"Reconstruction tail {u.tail_mass():.3e} unresolved at N={n}."
            raise TailNotResolvedError(msg)
        n *= 2
        logger.info("Reconstruction truncation doubled to %d.", n)

    rank = _numerical_rank(u, rank_floor)
    if rank != inp.expected_rank:
        msg = f"Reconstructed rank {rank}, expected {inp.expected_rank}."
        raise RankMismatchError(msg)
    return u


def roundtrip(u: FourierSymbol) -> float:
    """Relative L2 distance between u and the reconstruction of its spectral data."""
    sd = singular_spectrum(u)
    v = reconstruct(InverseSpectralInput.from_spectral_data(sd), u.trunc_dim)
    n = max(u.trunc_dim, v.trunc_dim)
    error = (u.resized(n) - v.resized(n)).norm()
    return error / u.norm()
