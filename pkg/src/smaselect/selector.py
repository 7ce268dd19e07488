"""Smallest-accepted selection and its oracle diagnostics.

A reference model is accepted when every comparison against a larger model
stays below its calibrated threshold; the selector returns the smallest
accepted reference.  Validation-mode helpers compute the risk-optimal
benchmark index, the adaptation payment implied by a threshold table, and
the equivalence with penalized least-squares selection on projection
families.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .calibration import CalibrationTable, JointDrawMatrix, tail_quantile
from .errors import (
    DimensionMismatch,
    NotProjectionFamily,
    RequiresKnownTruth,
)
from .family import ModelFamily, _pinv_gram
from .moments import (
    NoiseSpec,
    pair_bias,
    pair_variance,
    single_variance,
)


def test_statistics(family: ModelFamily, y) -> dict[tuple[int, int], float]:
    """Difference-statistic magnitudes for every ordered pair."""
    y = np.asarray(y, dtype=float)
    if y.shape != (family.n,):
        raise DimensionMismatch("data vector must have length n")
    outputs = {m: family.operator(m) @ y for m in family.models}
    return {
        (m, m_ref): float(np.linalg.norm(outputs[m] - outputs[m_ref]))
        for m, m_ref in family.pairs()
    }


@dataclass(frozen=True)
class SelectionResult:
    m_hat: int
    accepted: dict[int, bool]
    statistics: dict[tuple[int, int], float]
    table_mode: str

    def to_dict(self) -> dict:
        return {
            "m_hat": self.m_hat,
            "accepted": {str(m): bool(v) for m, v in sorted(self.accepted.items())},
            "stats": {f"{m}:{mr}": t for (m, mr), t in sorted(self.statistics.items())},
            "table_mode": self.table_mode,
        }


def sma_select(
    statistics: dict[tuple[int, int], float],
    table: CalibrationTable,
    models=None,
) -> SelectionResult:
    """Smallest reference accepted against all larger models.

    The largest model has nothing to be tested against and is accepted
    vacuously, so a selection always exists.  ``models`` may be passed
    explicitly for degenerate families whose statistics are empty.
    """
    if models is None:
        models = sorted({m for pair in statistics for m in pair})
    else:
        models = sorted(int(m) for m in models)
    if not models:
        raise DimensionMismatch("cannot infer the model set from empty statistics")
    accepted: dict[int, bool] = {}
    for m_ref in models:
        larger = [m for m in models if m > m_ref]
        accepted[m_ref] = all(
            statistics[(m, m_ref)] <= table.threshold(m, m_ref) for m in larger
        )
    m_hat = min(m for m, ok in accepted.items() if ok)
    return SelectionResult(
        m_hat=m_hat,
        accepted=accepted,
        statistics=dict(statistics),
        table_mode=table.mode,
    )


def table_from_thresholds(
    critical: dict[tuple[int, int], float], mode: str = "fixed"
) -> CalibrationTable:
    """Wrap externally fixed thresholds so they can drive the selector."""
    return CalibrationTable(
        x_level=float("nan"),
        alpha_plus=0.0,
        corrections={},
        critical=dict(critical),
        pair_dims={pair: 0.0 for pair in critical},
        mode=mode,
    )


@dataclass(frozen=True)
class OracleReport:
    """Risk-side benchmark: best index, payment, and its closed-form cap."""

    m_star: int
    mode: str
    alpha_plus: float
    z_bar: float | None = None
    z_bar_theory: float | None = None
    insensitivity_note: dict | None = None


def oracle(
    family: ModelFamily,
    f_true,
    sigma: NoiseSpec,
    alpha_plus: float,
    mode: str = "probabilistic",
) -> OracleReport:
    """Smallest reference whose bias is dominated by the variance allowance.

    In probabilistic mode only comparisons against the reference matter; in
    power-loss mode every pair at or above the reference must pass, so all
    larger models are unbiased benchmarks too.
    """
    if f_true is None or not sigma.is_known:
        raise RequiresKnownTruth("oracle needs the true response and known noise")
    if mode not in ("probabilistic", "power_loss"):
        raise DimensionMismatch(f"unknown oracle mode {mode!r}")

    def good_pair(m: int, m_ref: int) -> bool:
        b = pair_bias(family, f_true, m, m_ref)
        dim = pair_variance(family, sigma, m, m_ref).p_pair
        return b**2 <= alpha_plus**2 * dim

    for m_ref in family.models:
        larger = family.successors(m_ref)
        if mode == "probabilistic":
            ok = all(good_pair(m, m_ref) for m in larger)
        else:
            above = [m_ref] + larger
            ok = all(
                good_pair(hi, lo)
                for i, lo in enumerate(above)
                for hi in above[i + 1 :]
            )
        if ok:
            return OracleReport(m_star=m_ref, mode=mode, alpha_plus=alpha_plus)
    # Unreachable: the largest model is vacuously good.
    raise AssertionError("no oracle index found")


def payment_theory_cap(
    family: ModelFamily,
    sigma: NoiseSpec,
    m_star: int,
    x_level: float,
    alpha_plus: float,
    mode: str = "probabilistic",
    power_a: float | None = None,
) -> float:
    """Closed-form cap on the adaptation payment for Gaussian noise."""
    mom = single_variance(family, sigma, m_star)
    n_models = len(family.models)
    if mode == "probabilistic":
        return (1.0 + alpha_plus) * math.sqrt(mom.p_pair) + math.sqrt(
            2.0 * mom.lambda_pair * (x_level + math.log(n_models))
        )
    if mode == "power_loss":
        if power_a is None:
            raise DimensionMismatch("power-loss cap needs the exponent a")
        p0 = single_variance(family, sigma, family.models[0]).p_pair
        level = 2.0 * (1.0 + power_a) * math.log(mom.p_pair / p0) + math.log(n_models)
        return alpha_plus * math.sqrt(mom.p_pair) + math.sqrt(
            2.0 * mom.lambda_pair * level
        )
    raise DimensionMismatch(f"unknown mode {mode!r}")


def payment_for_adaptation(
    family: ModelFamily,
    sigma: NoiseSpec,
    report: OracleReport,
    table: CalibrationTable,
    f_true=None,
    draws: JointDrawMatrix | None = None,
) -> OracleReport:
    """Fill in the adaptation payment and its theoretical cap.

    The payment maximizes the thresholds of the benchmark index against all
    smaller models (zero when the benchmark is the smallest model).  When
    the true response and calibration draws are available, a zone-of-
    insensitivity note is attached: smaller models whose bias is large
    enough to be rejected with high probability are excluded and the
    payment is recomputed over the remaining zone.
    """
    if not sigma.is_known:
        raise RequiresKnownTruth("payment diagnostics need a known noise covariance")
    m_star = report.m_star
    smaller = [m for m in family.models if m < m_star]
    z_bar = max((table.threshold(m_star, m) for m in smaller), default=0.0)
    z_bar_theory = payment_theory_cap(
        family,
        sigma,
        m_star,
        table.x_level if table.mode == "probabilistic" else 0.0,
        table.alpha_plus,
        mode="power_loss" if table.mode == "power_loss" else "probabilistic",
        power_a=table.power_a,
    )
    note = None
    if f_true is not None and draws is not None and smaller:
        note = _insensitivity_note(family, f_true, m_star, table, draws)
    return replace(
        report, z_bar=z_bar, z_bar_theory=z_bar_theory, insensitivity_note=note
    )


def _insensitivity_note(family, f_true, m_star, table, draws) -> dict:
    """Exclude strongly biased smaller models by fixed-point iteration.

    Starting from an empty excluded set, a model below the benchmark is
    excluded when its bias exceeds the acceptance threshold plus the tail
    value at the current union-adjusted level; the level is refreshed from
    the excluded-set size until stable (at most one pass per model).
    """
    smaller = [m for m in family.models if m < m_star]
    bias = {m: pair_bias(family, f_true, m_star, m) for m in smaller}
    x_level = table.x_level

    def qualify(x_s: float) -> set[int]:
        out = set()
        for m in smaller:
            z_tail = tail_quantile(draws, m_star, m, x_s)
            if bias[m] > table.threshold(m_star, m) + z_tail:
                out.add(m)
        return out

    excluded: set[int] = set()
    x_s = x_level
    for _ in range(len(family.models)):
        x_s = x_level + math.log(max(1, len(excluded)))
        nxt = qualify(x_s)
        if nxt == excluded:
            break
        excluded = nxt
    zone = [m for m in smaller if m not in excluded]
    z_bar_zone = max((table.threshold(m_star, m) for m in zone), default=0.0)
    return {
        "x_s": x_s,
        "excluded": sorted(excluded),
        "zone": zone,
        "z_bar_zone": z_bar_zone,
        "bias": {m: bias[m] for m in smaller},
        "threshold": {m: table.threshold(m_star, m) for m in smaller},
    }


def aic_equivalence_check(family: ModelFamily, sigma_homogeneous: float, y) -> bool:
    """Penalized projection fit agrees with thresholded pairwise selection.

    Compares the minimizer of ``|y - P_m y|^2 + 2 sigma^2 m`` with the
    smallest-accepted choice under prediction-loss statistics and
    thresholds ``sigma sqrt(2 (m - m_ref))`` on the same projection family.
    """
    if family.weighting.kind in ("linear_functional", "subvector"):
        raise NotProjectionFamily(
            "equivalence check requires prediction-type loss on a projection family"
        )
    if sigma_homogeneous <= 0:
        raise DimensionMismatch("sigma must be > 0")
    y = np.asarray(y, dtype=float)
    if y.shape != (family.n,):
        raise DimensionMismatch("data vector must have length n")

    fits = {}
    for m in family.models:
        block = family.design.leading_block(m)
        gram_inv, _ = _pinv_gram(block @ block.T, m)
        fits[m] = block.T @ (gram_inv @ (block @ y))

    s2 = sigma_homogeneous**2
    penalized = [float(np.sum((y - fits[m]) ** 2) + 2.0 * s2 * m) for m in family.models]
    aic_choice = family.models[int(np.argmin(penalized))]

    stats = {
        (m, m_ref): float(np.linalg.norm(fits[m] - fits[m_ref]))
        for m, m_ref in family.pairs()
    }
    thresholds = {
        (m, m_ref): sigma_homogeneous * math.sqrt(2.0 * (m - m_ref))
        for m, m_ref in family.pairs()
    }
    sma_choice = sma_select(stats, table_from_thresholds(thresholds, mode="aic")).m_hat
    return aic_choice == sma_choice
