"""Exact moments and risk profiles under a known diagonal noise covariance.

Everything here is closed-form matrix arithmetic: pairwise variance traces
and operator norms, bias norms against a known response, and the
bias/variance risk decomposition used to locate the risk-optimal model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NotFunctional, NotOrderedPair
from .family import ModelFamily, _pinv_gram


@dataclass(frozen=True)
class NoiseSpec:
    """Noise model: known per-observation variances, or unknown.

    The unknown marker routes calibration through the residual-multiplier
    path; every known-noise operation requires ``variances``.
    """

    variances: np.ndarray | None

    def __post_init__(self):
        if self.variances is not None:
            arr = np.asarray(self.variances, dtype=float)
            if arr.ndim != 1:
                raise DimensionMismatch("noise variances must be a vector")
            if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
                raise DimensionMismatch("noise variances must be finite and > 0")
            object.__setattr__(self, "variances", arr)

    @classmethod
    def known(cls, variances) -> "NoiseSpec":
        return cls(variances=np.asarray(variances, dtype=float))

    @classmethod
    def homogeneous(cls, sigma: float, n: int) -> "NoiseSpec":
        return cls.known(np.full(n, float(sigma) ** 2))

    @classmethod
    def unknown(cls) -> "NoiseSpec":
        return cls(variances=None)

    @property
    def is_known(self) -> bool:
        return self.variances is not None

    def require_known(self) -> np.ndarray:
        if self.variances is None:
            raise DimensionMismatch("operation requires a known noise covariance")
        return self.variances


@dataclass(frozen=True)
class PairMoments:
    """Trace and operator norm of a pairwise difference variance."""

    p_pair: float
    lambda_pair: float
    v_matrix: np.ndarray | None = None

    def __post_init__(self):
        if not (0 <= self.lambda_pair <= self.p_pair * (1 + 1e-9) + 1e-300):
            raise DimensionMismatch("need 0 <= lambda_pair <= p_pair")


def _pair_moments_from_op(op: np.ndarray, variances: np.ndarray, keep_matrix: bool) -> PairMoments:
    v = (op * variances) @ op.T
    v = 0.5 * (v + v.T)
    p_pair = float(np.trace(v))
    lam = float(np.linalg.eigvalsh(v)[-1]) if v.size else 0.0
    lam = max(lam, 0.0)
    return PairMoments(p_pair=p_pair, lambda_pair=lam, v_matrix=v if keep_matrix else None)


def pair_variance(
    family: ModelFamily,
    sigma: NoiseSpec,
    m: int,
    m_ref: int,
    keep_matrix: bool = False,
) -> PairMoments:
    """Variance trace / operator norm of the difference estimator for a pair."""
    if m <= m_ref:
        raise NotOrderedPair(f"need m > m_ref, got ({m}, {m_ref})")
    variances = sigma.require_known()
    op = family.pair_operator(m, m_ref)
    return _pair_moments_from_op(op, variances, keep_matrix)


def single_variance(family: ModelFamily, sigma: NoiseSpec, m: int, keep_matrix: bool = False) -> PairMoments:
    """Same moments for a single model's estimator (not a difference)."""
    variances = sigma.require_known()
    return _pair_moments_from_op(family.operator(m), variances, keep_matrix)


def all_pair_moments(family: ModelFamily, sigma: NoiseSpec) -> dict[tuple[int, int], PairMoments]:
    return {
        (m, m_ref): pair_variance(family, sigma, m, m_ref)
        for m, m_ref in family.pairs()
    }


def pair_bias_vector(family: ModelFamily, f_true, m: int, m_ref: int) -> np.ndarray:
    if m <= m_ref:
        raise NotOrderedPair(f"need m > m_ref, got ({m}, {m_ref})")
    f = np.asarray(f_true, dtype=float)
    if f.shape != (family.n,):
        raise DimensionMismatch("f_true must have length n")
    return family.pair_operator(m, m_ref) @ f


def pair_bias(family: ModelFamily, f_true, m: int, m_ref: int) -> float:
    """Norm of the bias between two models' estimator means."""
    return float(np.linalg.norm(pair_bias_vector(family, f_true, m, m_ref)))


def best_linear_coefficients(family: ModelFamily, f_true) -> np.ndarray:
    """Coefficient vector of the best linear fit to the mean response."""
    f = np.asarray(f_true, dtype=float)
    psi = family.design.entries
    gram_inv, _ = _pinv_gram(psi @ psi.T, family.largest)
    return gram_inv @ (psi @ f)


@dataclass(frozen=True)
class RiskPoint:
    m: int
    bias2: float
    variance: float
    risk: float


def risk_profile(family: ModelFamily, f_true, sigma: NoiseSpec) -> list[RiskPoint]:
    """Per-model bias-squared / variance / total risk in the weighted loss.

    Bias is measured against the weighted best linear fit, so misspecified
    responses are fully supported.
    """
    variances = sigma.require_known()
    f = np.asarray(f_true, dtype=float)
    if f.shape != (family.n,):
        raise DimensionMismatch("f_true must have length n")
    target = family.weight_matrix @ best_linear_coefficients(family, f)
    out = []
    for m in family.models:
        op = family.operator(m)
        bias2 = float(np.sum((op @ f - target) ** 2))
        var = float(np.sum(op * op * variances))
        out.append(RiskPoint(m=m, bias2=bias2, variance=var, risk=bias2 + var))
    return out


def risk_argmin(profile: list[RiskPoint]) -> int:
    best = min(profile, key=lambda r: r.risk)
    return best.m


def functional_variance(family: ModelFamily, sigma: NoiseSpec, m: int) -> float:
    """Scalar variance of a rank-one (functional) estimator."""
    if family.q != 1:
        raise NotFunctional(f"weighting output dimension is {family.q}, need 1")
    variances = sigma.require_known()
    op = family.operator(m)
    return float(np.sum(op * op * variances))


def risk_profile_csv_rows(profile: list[RiskPoint]) -> list[tuple]:
    """Rows for CSV export: (m, bias2, variance, risk)."""
    return [(r.m, r.bias2, r.variance, r.risk) for r in profile]
