"""Exception and warning types shared across the package."""


class SmaError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(SmaError):
    """Shapes of design, weighting, or data vectors do not line up."""


class SingularGram(SmaError):
    """A Gram matrix is numerically meaningless (all-zero spectrum)."""

    def __init__(self, model: int, message: str | None = None):
        self.model = model
        super().__init__(message or f"Gram matrix for model {model} is singular")


class NotOrderedPair(SmaError):
    """A pairwise operation was called with m <= m_ref."""


class NotFunctional(SmaError):
    """Operation requires a rank-one (scalar output) weighting."""


class NotProjectionFamily(SmaError):
    """Operation requires a projection family under prediction-type loss."""


class BadExponent(SmaError):
    """Power-loss decay exponent must be strictly positive."""


class AllZeroResiduals(SmaError):
    """Presmoothing residuals vanish; multiplier calibration is degenerate."""


class RequiresKnownTruth(SmaError):
    """Validation-only operation called without the true response/noise."""


class MissingPair(SmaError):
    """Calibration table lacks a threshold needed by the selector."""


class ConfigInvalid(SmaError):
    """Experiment configuration violates its invariants."""


class SingularGramWarning(UserWarning):
    """Rank-deficient Gram handled through the pseudo-inverse path."""


class TailTooDeepWarning(UserWarning):
    """Requested tail level lies outside the simulated sample."""


class CalibrationWarning(UserWarning):
    """Non-fatal irregularity during threshold calibration."""
