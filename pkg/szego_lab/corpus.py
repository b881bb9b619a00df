"""Random rational data in a prescribed class V(d)."""

from __future__ import annotations

import logging

import numpy as np

from szego_lab.exceptions import DegenerateSpectrumError
from szego_lab.hankel import is_generic, singular_spectrum
from szego_lab.symbol import RationalSymbol, resolve_truncation

logger = logging.getLogger(__name__)

POLE_MIN = 0.2
POLE_MAX = 0.8
MAX_ATTEMPTS = 50


def random_rational(d: int, rng: np.random.Generator) -> RationalSymbol:
    """Draw A/B with B(0) = 1 of exact class d.

    Poles have modulus in [0.2, 0.8] and uniform argument; numerator
    coefficients are standard complex Gaussians.
    """
    if d < 1:
        msg = f"Class must be positive, got {d}."
        raise ValueError(msg)
    deg_den = d // 2
    deg_num = deg_den - 1 if d % 2 == 0 else deg_den
    den = np.ones(1, dtype=np.complex128)
    for _ in range(deg_den):
        pole = rng.uniform(POLE_MIN, POLE_MAX) * np.exp(2j * np.pi * rng.uniform())
        den = np.convolve(den, [1.0, -pole])
    num = rng.standard_normal(deg_num + 1) + 1j * rng.standard_normal(deg_num + 1)
    return RationalSymbol(num, den)


def random_generic(
    d: int,
    rng: np.random.Generator,
    max_attempts: int = MAX_ATTEMPTS,
) -> RationalSymbol:
    """Draw from V(d) until the singular values are simple and well separated."""
    for attempt in range(1, max_attempts + 1):
        candidate = random_rational(d, rng)
        if candidate.class_d != d:
            continue
        sd = singular_spectrum(resolve_truncation(candidate))
        if is_generic(sd) and sd.rank_h + sd.rank_k == d:
            logger.debug("Generic datum found after %d draws.", attempt)
            return candidate
    msg = f"No generic datum of class {d} in {max_attempts} draws."
    raise DegenerateSpectrumError(msg)
