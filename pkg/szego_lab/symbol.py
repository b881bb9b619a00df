"""Hardy-space symbols in truncated Fourier and rational form."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy import linalg, signal

from szego_lab.exceptions import (
    DimensionMismatchError,
    InvalidSymbolError,
    PoleInsideDiscError,
    RankMismatchError,
    TailNotResolvedError,
)

if TYPE_CHECKING:
    from collections.abc import Iterable, Sequence

logger = logging.getLogger(__name__)

DEFAULT_TRUNCATION = 128
MAX_TRUNCATION = 2048
TAIL_TOL = 1e-24
TAIL_GUARD = 8
ROOT_MARGIN = 1e-9
COMMON_ROOT_TOL = 1e-9
FIT_RCOND = 1e-10

# Relative size below which trailing polynomial coefficients are dropped.
_TRIM_TOL = 1e-14


def _as_coefficients(values: Any) -> np.ndarray:
    arr = np.array(values, dtype=np.complex128).reshape(-1)
    if arr.size == 0:
        msg = "A symbol needs at least one coefficient."
        raise InvalidSymbolError(msg)
    if not np.all(np.isfinite(arr)):
        msg = "Symbol coefficients must be finite."
        raise InvalidSymbolError(msg)
    return arr


@dataclass(frozen=True, eq=False)
class FourierSymbol:
    """Truncated nonnegative-frequency coefficients (u(0), ..., u(N-1)).

    The coefficient array is copied on construction and frozen, so instances
    can be shared between threads.
    """

    coeffs: np.ndarray

    def __post_init__(self) -> None:
        """Copy, validate and freeze the coefficient vector."""
        arr = _as_coefficients(self.coeffs)
        arr.setflags(write=False)
        object.__setattr__(self, "coeffs", arr)

    @classmethod
    def zeros(cls, n: int) -> FourierSymbol:
        """Return the zero symbol of truncation dimension ``n``."""
        return cls(np.zeros(n, dtype=np.complex128))

    @classmethod
    def basis(cls, index: int, n: int, value: complex = 1.0) -> FourierSymbol:
        """Return ``value * z**index`` at truncation ``n``."""
        coeffs = np.zeros(n, dtype=np.complex128)
        coeffs[index] = value
        return cls(coeffs)

    @property
    def trunc_dim(self) -> int:
        """Truncation dimension N."""
        return int(self.coeffs.size)

    def norm(self) -> float:
        """L2 norm of the coefficient vector."""
        return float(np.linalg.norm(self.coeffs))

    def is_zero(self) -> bool:
        """Whether every coefficient vanishes exactly."""
        return not np.any(self.coeffs)

    def tail_mass(self, guard: int = TAIL_GUARD) -> float:
        """Relative squared mass carried by the last ``guard`` coefficients."""
        weights = np.abs(self.coeffs) ** 2
        total = float(weights.sum())
        if total == 0.0:
            return 0.0
        return float(weights[max(self.trunc_dim - guard, 0) :].sum()) / total

    def resized(self, n: int) -> FourierSymbol:
        """Zero-pad or cut the coefficient vector to length ``n``."""
        if n <= self.trunc_dim:
            return FourierSymbol(self.coeffs[:n])
        padding = np.zeros(n - self.trunc_dim, dtype=np.complex128)
        return FourierSymbol(np.concatenate([self.coeffs, padding]))

    def trimmed(self, tail_tol: float = TAIL_TOL, minimum: int = 16) -> FourierSymbol:
        """Shortest power-of-two truncation whose tail mass stays below ``tail_tol``."""
        n = minimum
        while n < self.trunc_dim:
            candidate = self.resized(n)
            dropped = float(np.sum(np.abs(self.coeffs[n:]) ** 2))
            total = float(np.sum(np.abs(self.coeffs) ** 2))
            if candidate.tail_mass() <= tail_tol and dropped <= tail_tol * total:
                return candidate
            n *= 2
        return self

    def rotated(self, alpha: float) -> FourierSymbol:
        """Return u(e^{i alpha} z)."""
        phases = np.exp(1j * alpha * np.arange(self.trunc_dim))
        return FourierSymbol(self.coeffs * phases)

    def __add__(self, other: FourierSymbol) -> FourierSymbol:
        """Coefficient-wise sum."""
        _check_dims(self, other)
        return FourierSymbol(self.coeffs + other.coeffs)

    def __sub__(self, other: FourierSymbol) -> FourierSymbol:
        """Coefficient-wise difference."""
        _check_dims(self, other)
        return FourierSymbol(self.coeffs - other.coeffs)

    def __mul__(self, scalar: complex) -> FourierSymbol:
        """Multiply by a complex scalar."""
        return FourierSymbol(self.coeffs * scalar)

    __rmul__ = __mul__


def _trim(coeffs: np.ndarray) -> np.ndarray:
    scale = float(np.max(np.abs(coeffs))) if coeffs.size else 0.0
    if scale == 0.0:
        return np.zeros(1, dtype=np.complex128)
    keep = np.nonzero(np.abs(coeffs) > _TRIM_TOL * scale)[0]
    return coeffs[: keep[-1] + 1]


def _degree(coeffs: np.ndarray) -> int:
    if not np.any(coeffs):
        return -1
    return int(coeffs.size - 1)


@dataclass(frozen=True, eq=False)
class RationalSymbol:
    """Coprime pair A/B with B(0) = 1 and no pole in the closed unit disc.

    Polynomials are stored in ascending powers of z.
    """

    num: np.ndarray
    den: np.ndarray
    root_margin: float = ROOT_MARGIN

    def __post_init__(self) -> None:
        """Normalize B(0) = 1 and enforce the pole and coprimality conditions."""
        num = _trim(_as_coefficients(self.num))
        den = _trim(_as_coefficients(self.den))
        if den[0] == 0:
            msg = "Denominator must not vanish at z = 0."
            raise InvalidSymbolError(msg)
        num, den = num / den[0], den / den[0]

        den_roots = npoly.polyroots(den) if den.size > 1 else np.empty(0)
        inside = den_roots[np.abs(den_roots) <= 1.0 + self.root_margin]
        if inside.size:
            msg = f"Denominator has roots in the closed unit disc: {inside}"
            raise PoleInsideDiscError(msg)
        if den_roots.size and _degree(num) > 0:
            num_roots = npoly.polyroots(num)
            gaps = np.abs(num_roots[:, None] - den_roots[None, :])
            if gaps.min() < COMMON_ROOT_TOL:
                msg = "Numerator and denominator share a root."
                raise InvalidSymbolError(msg)

        num.setflags(write=False)
        den.setflags(write=False)
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)

    @property
    def deg_num(self) -> int:
        """Degree of A, -1 for the zero polynomial."""
        return _degree(self.num)

    @property
    def deg_den(self) -> int:
        """Degree of B."""
        return _degree(self.den)

    @property
    def class_d(self) -> int:
        """The d with u in V(d): 2 deg B when deg A < deg B, else 2 deg A + 1."""
        if self.deg_num < 0:
            return 0
        if self.deg_num < self.deg_den:
            return 2 * self.deg_den
        return 2 * self.deg_num + 1

    @property
    def poles(self) -> np.ndarray:
        """Pole parameters p with B(z) = prod(1 - p z); each satisfies |p| < 1."""
        if self.deg_den <= 0:
            return np.empty(0, dtype=np.complex128)
        return 1.0 / npoly.polyroots(self.den)

    def __call__(self, z: complex | np.ndarray) -> complex | np.ndarray:
        """Evaluate A(z)/B(z)."""
        return npoly.polyval(z, self.num) / npoly.polyval(z, self.den)

    def scaled(self, factor: complex) -> RationalSymbol:
        """Return factor * u."""
        return RationalSymbol(self.num * factor, self.den, self.root_margin)


def _check_dims(u: FourierSymbol, v: FourierSymbol) -> None:
    if u.trunc_dim != v.trunc_dim:
        msg = f"Truncation mismatch: {u.trunc_dim} != {v.trunc_dim}"
        raise DimensionMismatchError(msg)


def rational_to_fourier(
    r: RationalSymbol,
    n: int,
    tail_tol: float | None = TAIL_TOL,
) -> FourierSymbol:
    """Expand A/B into its first ``n`` Taylor coefficients.

    The recurrence u(n) = a_n - sum b_m u(n - m) is run as an IIR filter on a
    unit impulse.

    Args:
        r: The rational symbol.
        n: Truncation dimension, at least deg A + 1.
        tail_tol: Bound on the relative tail mass, or None to skip the check.

    Returns:
        The truncated Fourier symbol.

    Raises:
        InvalidSymbolError: If ``n`` cannot hold the numerator.
        TailNotResolvedError: If the tail mass exceeds ``tail_tol``.
    """
    if n < r.deg_num + 1 or n < 1:
        msg = f"Truncation {n} too short for a numerator of degree {r.deg_num}."
        raise InvalidSymbolError(msg)
    impulse = np.zeros(n, dtype=np.complex128)
    impulse[0] = 1.0
    u = FourierSymbol(signal.lfilter(r.num, r.den, impulse))
    if tail_tol is not None and u.tail_mass() > tail_tol:
        msg = f"Tail mass {u.tail_mass():.3e} above {tail_tol:.1e} at N={n}."
        raise TailNotResolvedError(msg)
    return u


def resolve_truncation(
    r: RationalSymbol,
    n: int = DEFAULT_TRUNCATION,
    max_n: int = MAX_TRUNCATION,
    tail_tol: float = TAIL_TOL,
) -> FourierSymbol:
    """Expand ``r``, doubling the truncation until the tail is resolved."""
    n = max(n, r.deg_num + 1)
    while True:
        try:
            return rational_to_fourier(r, n, tail_tol)
        except TailNotResolvedError:
            if 2 * n > max_n:
                raise
            n *= 2
            logger.info("Truncation doubled to %d to resolve the tail.", n)


def szego_project_product(u: FourierSymbol, v: FourierSymbol) -> FourierSymbol:
    """Return the Szego projection of u * conj(v).

    c_n = sum over m >= 0 with n + m < N of u(n + m) conj(v(m)).
    """
    _check_dims(u, v)
    full = np.correlate(u.coeffs, v.coeffs, mode="full")
    return FourierSymbol(full[u.trunc_dim - 1 :])


def analytic_product(u: FourierSymbol, v: FourierSymbol) -> FourierSymbol:
    """Truncated Cauchy product of two analytic symbols."""
    _check_dims(u, v)
    return FourierSymbol(np.convolve(u.coeffs, v.coeffs)[: u.trunc_dim])


def inner(u: FourierSymbol, v: FourierSymbol) -> complex:
    """Return (u|v) = sum u(n) conj(v(n))."""
    _check_dims(u, v)
    return complex(np.vdot(v.coeffs, u.coeffs))


def sobolev_weights(n: int, s: float) -> np.ndarray:
    """Weights (1 + n^2)^s for n = 0..N-1."""
    if s < 0:
        msg = f"Sobolev exponent must be nonnegative, got {s}."
        raise ValueError(msg)
    return (1.0 + np.arange(n, dtype=float) ** 2) ** s


def sobolev_norm_sq(u: FourierSymbol, s: float) -> float:
    """Return sum (1 + n^2)^s |u(n)|^2."""
    weights = sobolev_weights(u.trunc_dim, s)
    return float(np.sum(weights * np.abs(u.coeffs) ** 2))


def _prediction_fit(
    coeffs: np.ndarray,
    deg_num: int,
    deg_den: int,
    rcond: float,
) -> np.ndarray | None:
    """Least-squares denominator of degree ``deg_den``, or None on rank loss."""
    start = deg_num + 1
    stop = min(start + deg_den + 9, coeffs.size)
    if stop - start < deg_den:
        return None
    rows = np.arange(start, stop)
    design = np.column_stack([coeffs[rows - m] for m in range(1, deg_den + 1)])
    solution, _, rank, _ = linalg.lstsq(design, -coeffs[rows], cond=rcond)
    if rank != deg_den:
        return None
    return np.concatenate([[1.0], solution])


def fit_rational(u: FourierSymbol, d: int, rcond: float = FIT_RCOND) -> RationalSymbol:
    """Recover A/B from Taylor coefficients of a symbol in V(d).

    The denominator solves the linear-prediction equations
    sum_m b_m u(n - m) = 0 for n > deg A in the least-squares sense, and the
    numerator is the leading block of the convolution B * u.

    Args:
        u: Coefficients of a symbol of class ``d``.
        d: The class; deg B = d // 2.
        rcond: Relative singular-value cutoff of the least-squares solve.

    Returns:
        The fitted rational symbol.

    Raises:
        RankMismatchError: If the prediction matrix has the wrong rank.
        PoleInsideDiscError: If a fitted pole lands in the closed disc.
    """
    coeffs = u.coeffs
    if d <= 0:
        if np.any(coeffs):
            msg = "Nonzero symbol cannot be of class 0."
            raise RankMismatchError(msg)
        return RationalSymbol(np.zeros(1), np.ones(1))

    deg_den = d // 2
    deg_num = deg_den - 1 if d % 2 == 0 else deg_den
    scale = float(np.linalg.norm(coeffs))
    candidates = [deg_den] if d % 2 == 0 else list(range(deg_den, -1, -1))
    for degree in candidates:
        if degree == 0:
            tail = float(np.linalg.norm(coeffs[deg_num + 1 :]))
            if tail <= rcond * scale:
                return RationalSymbol(coeffs[: deg_num + 1], np.ones(1))
            continue
        den = _prediction_fit(coeffs, deg_num, degree, rcond)
        if den is not None:
            num = np.convolve(den, coeffs)[: deg_num + 1]
            return RationalSymbol(num, den)
    msg = f"Coefficients are not numerically of class {d}."
    raise RankMismatchError(msg)


def _pairs_to_complex(pairs: Iterable[Any]) -> np.ndarray:
    values = []
    for item in pairs:
        if isinstance(item, (list, tuple)):
            re_part, im_part = item
            values.append(complex(float(re_part), float(im_part)))
        else:
            values.append(complex(float(item)))
    return _as_coefficients(values)


def _complex_to_pairs(values: Sequence[complex] | np.ndarray) -> list[list[float]]:
    return [[float(np.real(v)), float(np.imag(v))] for v in values]


def symbol_from_dict(data: dict[str, Any]) -> FourierSymbol | RationalSymbol:
    """Parse the JSON symbol schema.

    ``{"type": "rational", "num": [[re, im], ...], "den": [[re, im], ...]}`` or
    ``{"type": "fourier", "coeffs": [[re, im], ...]}``.
    """
    kind = data.get("type")
    try:
        if kind == "rational":
            return RationalSymbol(
                _pairs_to_complex(data["num"]),
                _pairs_to_complex(data.get("den", [[1.0, 0.0]])),
            )
        if kind == "fourier":
            return FourierSymbol(_pairs_to_complex(data["coeffs"]))
    except KeyError as exc:
        msg = f"Symbol of type {kind!r} is missing {exc}."
        raise InvalidSymbolError(msg) from exc
    except InvalidSymbolError:
        raise
    except (TypeError, ValueError) as exc:
        msg = f"Malformed symbol coefficients: {exc}"
        raise InvalidSymbolError(msg) from exc
    msg = f"Unknown symbol type {kind!r}."
    raise InvalidSymbolError(msg)


def symbol_to_dict(symbol: FourierSymbol | RationalSymbol) -> dict[str, Any]:
    """Serialize a symbol to the JSON schema read by ``symbol_from_dict``."""
    if isinstance(symbol, RationalSymbol):
        return {
            "type": "rational",
            "num": _complex_to_pairs(symbol.num),
            "den": _complex_to_pairs(symbol.den),
        }
    return {"type": "fourier", "coeffs": _complex_to_pairs(symbol.coeffs)}


def as_fourier(
    symbol: FourierSymbol | RationalSymbol,
    n: int = DEFAULT_TRUNCATION,
    max_n: int = MAX_TRUNCATION,
    tail_tol: float = TAIL_TOL,
) -> FourierSymbol:
    """Fourier form of either representation, resolving rational tails."""
    if isinstance(symbol, FourierSymbol):
        return symbol
    return resolve_truncation(symbol, n=n, max_n=max_n, tail_tol=tail_tol)
