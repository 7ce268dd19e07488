"""Closed-form Gaussian quadratic-form tails and a TV comparison bound.

Pure functions used as threshold caps in diagnostics and as MC-falsifiable
properties in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DimensionMismatch


@dataclass(frozen=True)
class QFParams:
    """Spectral summaries of a PSD matrix driving a Gaussian quadratic form.

    ``p_trace`` is the trace, ``v2`` the trace of the square, ``lam`` the
    operator norm, ``x`` the exponential deviation level.
    """

    p_trace: float
    v2: float
    lam: float
    x: float

    def __post_init__(self):
        if min(self.p_trace, self.v2, self.lam, self.x) < 0:
            raise DimensionMismatch("quadratic-form parameters must be >= 0")
        if self.v2 > self.p_trace * self.lam * (1 + 1e-9) + 1e-300:
            raise DimensionMismatch("need v2 <= p_trace * lam")


def qf_upper(params: QFParams) -> float:
    """Upper deviation threshold: exceeded with probability <= e^-x."""
    return params.p_trace + 2.0 * math.sqrt(params.v2 * params.x) + 2.0 * params.lam * params.x


def norm_upper(p_trace: float, lam: float, x: float) -> float:
    """Norm-scale threshold sqrt(p) + sqrt(2 lam x), same e^-x guarantee."""
    return math.sqrt(p_trace) + math.sqrt(2.0 * lam * x)


def qf_lower(p_trace: float, v2: float, x: float) -> float:
    """Lower deviation threshold, clamped at zero."""
    return max(0.0, p_trace - 2.0 * math.sqrt(v2 * x))


def pinsker_tv_bound(delta2: float, beta_quad: float) -> float:
    """Total-variation bound between two Gaussians from KL ingredients.

    ``delta2`` bounds the squared Frobenius distance of the whitened
    covariance ratio from the identity; ``beta_quad`` is the quadratic form
    of the mean shift.  The caller asserts the operator-norm precondition
    (whitened covariance within 1/2 of the identity).
    """
    if delta2 < 0 or beta_quad < 0:
        raise DimensionMismatch("TV bound inputs must be >= 0")
    return 0.5 * math.sqrt(delta2 + beta_quad)


def pinsker_tv_bound_op(p: float, eps: float, beta_norm2: float = 0.0) -> float:
    """Operator-norm corollary of the TV bound: 0.5 sqrt(p eps^2 + (1+eps)|beta|^2)."""
    if p < 0 or eps < 0 or beta_norm2 < 0:
        raise DimensionMismatch("TV bound inputs must be >= 0")
    return 0.5 * math.sqrt(p * eps**2 + (1.0 + eps) * beta_norm2)
