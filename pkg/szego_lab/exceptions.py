"""Error hierarchy for szego-lab.

Every error carries a ``code`` naming the failure in run reports.
"""

from __future__ import annotations


class SzegoLabError(Exception):
    """Base class for all numerical and input failures of the lab."""

    code = "SzegoLabError"


class InvalidSymbolError(SzegoLabError, ValueError):
    """Malformed symbol data (bad JSON shape, non-finite or empty coefficients)."""

    code = "InvalidSymbol"


class TailNotResolvedError(SzegoLabError):
    """Relative tail mass above tolerance at the largest allowed truncation."""

    code = "TailNotResolved"


class DimensionMismatchError(SzegoLabError, ValueError):
    """Two symbols or vectors with different truncation dimensions."""

    code = "DimensionMismatch"


class RankMismatchError(SzegoLabError):
    """Numerical rank differs from the one implied by the class d."""

    code = "RankMismatch"


class PoleInsideDiscError(SzegoLabError):
    """A root of the denominator lies in the closed unit disc."""

    code = "PoleInsideDisc"


class AmbiguousGroupingError(SzegoLabError):
    """An eigenvalue gap falls in the ambiguous band above the grouping tolerance."""

    code = "AmbiguousGrouping"


class ZeroSymbolError(SzegoLabError):
    """Spectral analysis requested for u = 0."""

    code = "ZeroSymbol"


class DegenerateSpectrumError(SzegoLabError):
    """An operation that needs simple singular values met a multiple one."""

    code = "DegenerateSpectrum"


class InconsistentInputsError(SzegoLabError):
    """Spectral data or projections do not belong to the given symbol."""

    code = "InconsistentInputs"


class DegenerateSigmasError(SzegoLabError):
    """sigma_1^2 and sigma_2^2 too close for the closed-form inversion."""

    code = "DegenerateSigmas"


class ResonantXError(SzegoLabError):
    """x lies within the resonance margin of some 1/rho_j^2 or 1/sigma_k^2."""

    code = "ResonantX"


class StepSizeUnderflowError(SzegoLabError):
    """The adaptive integrator cannot meet its tolerance with a positive step."""

    code = "StepSizeUnderflow"


class NotOnResonantLeafError(SzegoLabError):
    """The closed-form profile needs ell_1 = 0."""

    code = "NotOnResonantLeaf"


class CrossingDetectedError(SzegoLabError):
    """A K-eigenvalue lost dominance along a trajectory."""

    code = "CrossingDetected"


class FitUnreliableError(SzegoLabError):
    """A non-flat log-linear fit with poor coefficient of determination."""

    code = "FitUnreliable"


class NumericalSingularityError(SzegoLabError):
    """The inverse-formula matrix is numerically singular."""

    code = "NumericalSingularity"


class UnsupportedMultiplicityError(SzegoLabError):
    """Inverse reconstruction only accepts simple singular values."""

    code = "UnsupportedMultiplicity"


class EvalFailureError(SzegoLabError):
    """A functional failed to evaluate near the base point."""

    code = "EvalFailure"
