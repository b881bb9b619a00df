"""Poisson brackets of functionals on truncated Hardy-space coordinates.

Gradients follow dF(u).h = Re(h|g), the Hamiltonian field is X_F = -i g and
{F, G} = Im(g_F | g_G). Complex-valued functionals are bracketed bilinearly
through their real and imaginary parts.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Any

import numpy as np
from scipy import linalg

from szego_lab.conservation import (
    check_resonance,
    hamiltonian,
    mass,
    momentum,
    resolvents,
    series_sample,
)
from szego_lab.exceptions import (
    DegenerateSpectrumError,
    EvalFailureError,
    SzegoLabError,
)
from szego_lab.flow import vector_field_H
from szego_lab.hankel import shifted_matrix, shifted_square, singular_spectrum
from szego_lab.symbol import FourierSymbol, szego_project_product

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

logger = logging.getLogger(__name__)

FD_STEP = 1e-5


class GradientMode(str, Enum):
    """How a functional's gradient is obtained."""

    FINITE_DIFF = "finite_diff"
    ANALYTIC = "analytic"


@dataclass(frozen=True)
class Functional:
    """A named real or complex functional of u.

    ``analytic`` returns the coefficient-vector gradient of a real functional
    and is used when ``gradient_mode`` is ANALYTIC.
    """

    name: str
    evaluate: Callable[[FourierSymbol], complex | float]
    gradient_mode: GradientMode = GradientMode.FINITE_DIFF
    analytic: Callable[[FourierSymbol], np.ndarray] | None = None
    is_complex: bool = False

    def __call__(self, u: FourierSymbol) -> complex | float:
        """Evaluate at u."""
        return self.evaluate(u)


@dataclass(frozen=True)
class BracketReport:
    """Antisymmetric bracket matrix with gradient-norm normalization.

    Rows listed in ``informational`` are reported but excluded from
    ``max_normalized_entry``.
    """

    labels: tuple[str, ...]
    matrix: np.ndarray
    norms: np.ndarray
    informational: tuple[str, ...] = ()
    extras: dict[str, float] = field(default_factory=dict)

    @property
    def normalized(self) -> np.ndarray:
        """B_ij / (|g_i| |g_j|)."""
        scale = np.outer(self.norms, self.norms)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(scale > 0, self.matrix / scale, 0.0)

    @property
    def scale(self) -> float:
        """Largest gradient-norm product off the diagonal."""
        products = np.outer(self.norms, self.norms)
        np.fill_diagonal(products, 0.0)
        return float(products.max(initial=0.0))

    @property
    def max_normalized_entry(self) -> float:
        """Largest normalized off-diagonal entry among asserted rows."""
        keep = [
            i for i, label in enumerate(self.labels) if label not in self.informational
        ]
        block = np.abs(self.normalized[np.ix_(keep, keep)])
        np.fill_diagonal(block, 0.0)
        return float(block.max(initial=0.0))

    @property
    def antisymmetry(self) -> float:
        """max |B_ij + B_ji| relative to ``scale``."""
        defect = float(np.max(np.abs(self.matrix + self.matrix.T), initial=0.0))
        return defect / self.scale if self.scale > 0 else defect

    def to_dict(self) -> dict[str, Any]:
        """JSON form with labels and the raw and normalized matrices."""
        return {
            "labels": list(self.labels),
            "matrix": self.matrix.tolist(),
            "normalized": self.normalized.tolist(),
            "scale": self.scale,
            "max_normalized_entry": self.max_normalized_entry,
            "informational": list(self.informational),
            **self.extras,
        }


def _safe_eval(
    evaluate: Callable[[FourierSymbol], np.ndarray],
    coeffs: np.ndarray,
) -> np.ndarray:
    try:
        values = np.asarray(evaluate(FourierSymbol(coeffs)), dtype=np.float64)
    except (SzegoLabError, linalg.LinAlgError, ValueError) as exc:
        msg = f"Functional failed near the base point: {exc}"
        raise EvalFailureError(msg) from exc
    if not np.all(np.isfinite(values)):
        msg = "Functional returned non-finite values near the base point."
        raise EvalFailureError(msg)
    return values


def component_gradients(
    evaluate: Callable[[FourierSymbol], np.ndarray],
    u: FourierSymbol,
    h0: float = FD_STEP,
    *,
    richardson: bool = False,
    workers: int = 1,
) -> np.ndarray:
    """Central-difference gradients of a real vector-valued functional.

    Each of the 2N real coordinates is perturbed by h0 * max(1, |u|); one
    evaluation returns every component. With ``richardson`` the half-step
    difference is combined as (4 D(h/2) - D(h)) / 3.

    Returns:
        Complex array of shape (components, N).

    Raises:
        EvalFailureError: If an evaluation fails or is not finite.
    """
    n = u.trunc_dim
    base = u.coeffs
    step = h0 * max(1.0, u.norm())

    def derivative(direction: np.ndarray, h: float) -> np.ndarray:
        plus = _safe_eval(evaluate, base + h * direction)
        minus = _safe_eval(evaluate, base - h * direction)
        return (plus - minus) / (2 * h)

    def coordinate(index: int) -> np.ndarray:
        direction = np.zeros(n, dtype=np.complex128)
        direction[index % n] = 1.0 if index < n else 1j
        value = derivative(direction, step)
        if richardson:
            value = (4 * derivative(direction, step / 2) - value) / 3
        return value

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        columns = list(pool.map(coordinate, range(2 * n)))
    real = np.column_stack(columns[:n])
    imag = np.column_stack(columns[n:])
    return real + 1j * imag


def gradient(
    functional: Functional,
    u: FourierSymbol,
    h0: float = FD_STEP,
    *,
    richardson: bool = False,
    mode: GradientMode | None = None,
) -> FourierSymbol:
    """Gradient g of a real functional with dF(u).h = Re(h|g).

    Raises:
        EvalFailureError: If the functional fails near u.
        ValueError: If ANALYTIC is requested without an analytic gradient.
    """
    mode = mode or functional.gradient_mode
    if mode is GradientMode.ANALYTIC:
        if functional.analytic is None:
            msg = f"{functional.name} has no analytic gradient."
            raise ValueError(msg)
        return FourierSymbol(functional.analytic(u))

    def evaluate(v: FourierSymbol) -> np.ndarray:
        return np.array([float(np.real(functional(v)))])

    return FourierSymbol(component_gradients(evaluate, u, h0, richardson=richardson)[0])


def bracket_gradients(g_f: np.ndarray, g_g: np.ndarray) -> float:
    """{F, G} = Im(g_F | g_G) for real functionals."""
    return float(np.vdot(g_g, g_f).imag)


def complex_bracket(
    f_parts: tuple[np.ndarray, np.ndarray],
    g_parts: tuple[np.ndarray, np.ndarray],
) -> complex:
    """Bilinear bracket of F = F_r + i F_i and G = G_r + i G_i from part gradients."""
    (fr, fi), (gr, gi) = f_parts, g_parts
    real = bracket_gradients(fr, gr) - bracket_gradients(fi, gi)
    imag = bracket_gradients(fr, gi) + bracket_gradients(fi, gr)
    return complex(real, imag)


def _part_gradients(
    functional: Functional,
    u: FourierSymbol,
    h0: float,
) -> tuple[np.ndarray, np.ndarray]:
    if not functional.is_complex:
        g = gradient(functional, u, h0).coeffs
        return g, np.zeros_like(g)

    def evaluate(v: FourierSymbol) -> np.ndarray:
        value = complex(functional(v))
        return np.array([value.real, value.imag])

    grads = component_gradients(evaluate, u, h0)
    return grads[0], grads[1]


def bracket(
    f: Functional,
    g: Functional,
    u: FourierSymbol,
    h0: float = FD_STEP,
) -> complex | float:
    """{F, G}(u); real for real functionals, complex otherwise."""
    value = complex_bracket(_part_gradients(f, u, h0), _part_gradients(g, u, h0))
    if f.is_complex or g.is_complex:
        return value
    return value.real


def mass_functional() -> Functional:
    """Q with analytic gradient 2u."""
    return Functional(
        "Q",
        mass,
        GradientMode.ANALYTIC,
        lambda u: 2 * u.coeffs,
    )


def momentum_functional() -> Functional:
    """M with analytic gradient 2n u(n)."""
    return Functional(
        "M",
        momentum,
        GradientMode.ANALYTIC,
        lambda u: 2 * np.arange(u.trunc_dim) * u.coeffs,
    )


def hamiltonian_functional() -> Functional:
    """|J|^2/2 with gradient i X_H."""
    return Functional(
        "H",
        hamiltonian,
        GradientMode.ANALYTIC,
        lambda u: 1j * vector_field_H(u).coeffs,
    )


def f_functional(x: float) -> Functional:
    """F(x) = 2Q - x R(x), evaluated without the resonance check."""
    return Functional(
        f"F({x:g})",
        lambda u: series_sample(u, x, check=False).f_val,
    )


def sigma_sq_gradient(u: FourierSymbol, index: int) -> np.ndarray:
    """Analytic gradient of the index-th largest eigenvalue of K_u^2.

    With v the unit eigenvector and a = conj(K) v, the gradient is
    g_n = 2 conj(c_n), c_n = sum_{j + l = n - 1} conj(v_j) a_l.
    """
    n = u.trunc_dim
    position = n - 1 - index
    _, vectors = linalg.eigh(shifted_square(u), subset_by_index=[position, position])
    v = vectors[:, 0]
    a = shifted_matrix(u).conj() @ v
    c = np.zeros(n, dtype=np.complex128)
    c[1:] = np.convolve(v.conj(), a)[: n - 1]
    return 2 * c.conj()


def sigma_functional(index: int) -> Functional:
    """sigma_{index+1}^2 with its first-order perturbation gradient."""

    def evaluate(u: FourierSymbol) -> float:
        n = u.trunc_dim
        values = linalg.eigh(
            shifted_square(u),
            eigvals_only=True,
            subset_by_index=[n - 1 - index, n - 1 - index],
        )
        return float(values[0])

    return Functional(
        f"sigma_sq_{index + 1}",
        evaluate,
        GradientMode.ANALYTIC,
        lambda u: sigma_sq_gradient(u, index),
    )


def spectral_vector(u: FourierSymbol, count: int) -> np.ndarray:
    """(ell_1..ell_count, ell_inf, sigma_1^2..sigma_count^2) from the top eigenpairs.

    Using a fixed number of top eigenpairs keeps the labels stable under
    small perturbations.
    """
    n = u.trunc_dim
    values, vectors = linalg.eigh(shifted_square(u), subset_by_index=[n - count, n - 1])
    values = values[::-1]
    vectors = vectors[:, ::-1]
    q = mass(u)
    coeffs = u.coeffs
    w = szego_project_product(u, u).coeffs
    u_coords = vectors.conj().T @ coeffs
    w_coords = vectors.conj().T @ w
    ells = (2 * q + values) * np.abs(u_coords) ** 2 - np.abs(w_coords) ** 2
    u_inf = coeffs - vectors @ u_coords
    w_inf = w - vectors @ w_coords
    ell_inf = 2 * q * np.vdot(u_inf, u_inf).real - np.vdot(w_inf, w_inf).real
    return np.concatenate([ells, [ell_inf], values])


def default_bracket_x(leading_sigma_sq: float) -> list[float]:
    """x values {-1, -0.5, -0.25} / sigma_1^2 for F(x) rows."""
    return [-1.0 / leading_sigma_sq, -0.5 / leading_sigma_sq, -0.25 / leading_sigma_sq]


def involution_report(
    u: FourierSymbol,
    x_values: Sequence[float] | None = None,
    h0: float = FD_STEP,
    workers: int = 1,
) -> BracketReport:
    """Bracket matrix of all ell_k, ell_inf, sigma_k^2 and sampled F(x).

    sigma_k^2 rows use analytic gradients; their finite-difference mismatch is
    reported under ``extras["sigma_gradient_mismatch"]``. ell_inf is
    informational.

    Raises:
        DegenerateSpectrumError: If the spectrum is not simple or K_u vanishes.
    """
    u = u.trimmed()
    sd = singular_spectrum(u)
    count = len(sd.k_eigs)
    if not sd.is_simple() or count == 0:
        msg = "Involution report needs a simple spectrum with K_u != 0."
        raise DegenerateSpectrumError(msg)
    xs = list(x_values) if x_values is not None else default_bracket_x(sd.k_values[0])
    for x in xs:
        check_resonance(u, x)

    def evaluate(v: FourierSymbol) -> np.ndarray:
        f_values = [series_sample(v, x, check=False).f_val for x in xs]
        return np.concatenate([spectral_vector(v, count), f_values])

    grads = component_gradients(evaluate, u, h0, workers=workers)
    mismatch = 0.0
    for k in range(count):
        row = count + 1 + k
        analytic = sigma_sq_gradient(u, k)
        scale = max(float(np.linalg.norm(analytic)), 1e-300)
        mismatch = max(mismatch, float(np.linalg.norm(analytic - grads[row])) / scale)
        grads[row] = analytic

    labels = (
        *(f"ell_{k + 1}" for k in range(count)),
        "ell_inf",
        *(f"sigma_sq_{k + 1}" for k in range(count)),
        *(f"F({x:g})" for x in xs),
    )
    size = len(labels)
    matrix = np.zeros((size, size))
    for i in range(size):
        for j in range(i + 1, size):
            matrix[i, j] = bracket_gradients(grads[i], grads[j])
            matrix[j, i] = -matrix[i, j]
    logger.debug("Involution report over %d functionals at N=%d.", size, u.trunc_dim)
    return BracketReport(
        labels=labels,
        matrix=matrix,
        norms=np.linalg.norm(grads, axis=1),
        informational=("ell_inf",),
        extras={"sigma_gradient_mismatch": mismatch},
    )


@dataclass(frozen=True)
class LemmaReport:
    """Relative residuals of the resolvent bracket identities at (x, y)."""

    x: float
    y: float
    residuals: dict[str, float]

    @property
    def max_residual(self) -> float:
        """Worst identity."""
        return max(self.residuals.values(), default=0.0)


_LEMMA_COMPONENTS = (
    "absZx",
    "absZy",
    "reJ3x",
    "imJ3x",
    "reJ3y",
    "imJ3y",
    "J0x",
    "reZx",
    "imZx",
    "reZy",
    "imZy",
    "Q",
    "absJ3y",
)


def _lemma_vector(v: FourierSymbol, x: float, y: float) -> np.ndarray:
    sx = resolvents(v, x).sample
    sy = resolvents(v, y).sample
    return np.array(
        [
            abs(sx.z) ** 2,
            abs(sy.z) ** 2,
            sx.j3.real,
            sx.j3.imag,
            sy.j3.real,
            sy.j3.imag,
            sx.j0,
            sx.z.real,
            sx.z.imag,
            sy.z.real,
            sy.z.imag,
            mass(v),
            abs(sy.j3) ** 2,
        ]
    )


def bracket_lemma_checks(
    u: FourierSymbol,
    x: float,
    y: float,
    h0: float = FD_STEP,
    workers: int = 1,
) -> LemmaReport:
    """Check the closed-form brackets of Z(x), J3(x) and J0(x) by finite differences.

    Identities, with Z = J^(1), J3 = J^(3), J0 = J^(0):

        {|Z(x)|^2, |Z(y)|^2} = 4 Im(Z(x) conj Z(y)) / (x - y)
            * [x J0(x)^2 - y J0(y)^2 + x^2 |Z(x)|^2 - y^2 |Z(y)|^2]
        {J3(x), J3(y)} = -2i [x J3(x) - y J3(y)]^2 / (x - y)
        {J3(x), conj J3(y)} = 2i [J0(x)^2/x - J0(y)^2/y - 1/x + 1/y] / (x - y)
        {J0(x), |Z(y)|^2} = 4x^2 J0(x) Im(Z(x) conj Z(y)) / (x - y)
        {Z(x), Z(y)} = -2i (x Z(x) - y Z(y))^2 / (x - y)
        {Z(x), conj Z(y)} = 2i (x J0(x)^2 - y J0(y)^2) / (x - y)
        {Q, |J3(y)|^2} = 0

    Raises:
        ValueError: If x == y or either is zero.
        ResonantXError: If x or y is resonant.
    """
    if x == y or x == 0 or y == 0:
        msg = f"Need distinct nonzero x, y; got {x}, {y}."
        raise ValueError(msg)
    u = u.trimmed()
    check_resonance(u, x)
    check_resonance(u, y)
    sx = resolvents(u, x).sample
    sy = resolvents(u, y).sample
    grads = component_gradients(
        lambda v: _lemma_vector(v, x, y), u, h0, workers=workers
    )
    g = dict(zip(_LEMMA_COMPONENTS, grads))
    zero = np.zeros(u.trunc_dim, dtype=np.complex128)
    zx, zy = sx.z, sy.z
    j0x, j0y = sx.j0, sy.j0
    cross = (zx * np.conj(zy)).imag

    def relative(lhs: complex, rhs: complex, *names: str) -> float:
        scale = 1.0
        for name in names:
            scale *= float(np.linalg.norm(g[name]))
        return abs(lhs - rhs) / max(abs(rhs), 1e-3 * scale, 1e-300)

    identities = {
        "abs_z_abs_z": (
            bracket_gradients(g["absZx"], g["absZy"]),
            4
            * cross
            / (x - y)
            * (x * j0x**2 - y * j0y**2 + x**2 * abs(zx) ** 2 - y**2 * abs(zy) ** 2),
            ("absZx", "absZy"),
        ),
        "j3_j3": (
            complex_bracket((g["reJ3x"], g["imJ3x"]), (g["reJ3y"], g["imJ3y"])),
            -2j * (x * sx.j3 - y * sy.j3) ** 2 / (x - y),
            ("reJ3x", "reJ3y"),
        ),
        "j3_conj_j3": (
            complex_bracket((g["reJ3x"], g["imJ3x"]), (g["reJ3y"], -g["imJ3y"])),
            2j * (j0x**2 / x - j0y**2 / y - 1 / x + 1 / y) / (x - y),
            ("reJ3x", "reJ3y"),
        ),
        "j0_abs_z": (
            bracket_gradients(g["J0x"], g["absZy"]),
            4 * x**2 * j0x * cross / (x - y),
            ("J0x", "absZy"),
        ),
        "z_z": (
            complex_bracket((g["reZx"], g["imZx"]), (g["reZy"], g["imZy"])),
            -2j * (x * zx - y * zy) ** 2 / (x - y),
            ("reZx", "reZy"),
        ),
        "z_conj_z": (
            complex_bracket((g["reZx"], g["imZx"]), (g["reZy"], -g["imZy"])),
            2j * (x * j0x**2 - y * j0y**2) / (x - y),
            ("reZx", "reZy"),
        ),
        "q_abs_j3": (
            complex_bracket((g["Q"], zero), (g["absJ3y"], zero)),
            0.0,
            ("Q", "absJ3y"),
        ),
    }
    residuals = {
        name: relative(lhs, rhs, *names)
        for name, (lhs, rhs, names) in identities.items()
    }
    return LemmaReport(x=x, y=y, residuals=residuals)


def leibniz_residual(
    f: Functional,
    g: Functional,
    h: Functional,
    u: FourierSymbol,
    h0: float = FD_STEP,
) -> float:
    """|{FG, H} - F{G, H} - G{F, H}| relative to the largest term."""
    product = Functional(f"{f.name}*{g.name}", lambda v: float(f(v)) * float(g(v)))
    lhs = float(bracket(product, h, u, h0))
    f_value, g_value = float(f(u)), float(g(u))
    first = f_value * float(bracket(g, h, u, h0))
    second = g_value * float(bracket(f, h, u, h0))
    scale = max(abs(lhs), abs(first), abs(second), 1e-300)
    return abs(lhs - first - second) / scale


def hamiltonian_consistency(
    f: Functional,
    u: FourierSymbol,
    delta: float = 1e-5,
    h0: float = FD_STEP,
) -> float:
    """Compare {H, F} with the central difference of F along X_H.

    d/dt F(u(t)) = dF.X_H = Re(X_H | g_F) = Im(g_H | g_F) = {H, F}.
    """
    field_h = vector_field_H(u)
    step = delta * max(1.0, u.norm()) / max(field_h.norm(), 1e-300)
    plus = float(f(u + field_h * step))
    minus = float(f(u - field_h * step))
    rate = (plus - minus) / (2 * step)
    value = float(bracket(hamiltonian_functional(), f, u, h0))
    return abs(rate - value) / max(abs(value), abs(rate), 1e-300)


def functional_by_name(name: str, u: FourierSymbol) -> Functional:
    """Resolve a CLI functional name: Q, M, H, ell_k, sigma_sq_k or F(x).

    Raises:
        ValueError: If the name is unknown.
    """
    fixed = {
        "Q": mass_functional,
        "M": momentum_functional,
        "H": hamiltonian_functional,
    }
    if name in fixed:
        return fixed[name]()
    if name.startswith("F(") and name.endswith(")"):
        return f_functional(float(name[2:-1]))
    if name.startswith("sigma_sq_"):
        return sigma_functional(int(name.removeprefix("sigma_sq_")) - 1)
    if name.startswith("ell_"):
        count = len(singular_spectrum(u).k_eigs)
        label = name.removeprefix("ell_")
        index = count if label == "inf" else int(label) - 1

        def evaluate(v: FourierSymbol) -> float:
            return float(spectral_vector(v, count)[index])

        return Functional(name, evaluate)
    msg = f"Unknown functional {name!r}."
    raise ValueError(msg)
