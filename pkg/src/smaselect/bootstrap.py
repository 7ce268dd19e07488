"""Threshold calibration under unknown heteroscedastic noise.

The data are presmoothed by projecting onto a large pilot model; the
residuals, multiplied coordinatewise by fresh standard normal weights,
replace the unavailable noise law.  Tail values, multiplicity corrections
and critical values are then computed exactly as in the known-noise path,
with data-driven effective dimensions in the bias allowance.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .calibration import (
    CalibrationTable,
    JointDrawMatrix,
    PowerLossParams,
    _pair_levels_and_thresholds,
    _sample_scaled_norms,
    multiplicity_correction,
    power_loss_params,
    Q_SLACK,
)
from .errors import (
    AllZeroResiduals,
    CalibrationWarning,
    DimensionMismatch,
    RequiresKnownTruth,
    SingularGram,
)
from .family import GRAM_CUTOFF, ModelFamily
from .moments import NoiseSpec

# Residuals below this fraction of the data scale are treated as vanishing.
RESIDUAL_FLOOR = 1e-12


@dataclass(frozen=True)
class PresmoothResult:
    """Residuals after projecting out a pilot model.

    The projector is held implicitly through an orthonormal basis of the
    pilot feature span; ``projector_matrix`` materializes it on demand.
    """

    residuals: np.ndarray
    projector_dim: int
    basis: np.ndarray
    negligible: bool

    def apply_projector(self, v: np.ndarray) -> np.ndarray:
        return self.basis @ (self.basis.T @ v)

    def projector_matrix(self) -> np.ndarray:
        return self.basis @ self.basis.T


def pilot_basis(family: ModelFamily, m_dagger: int) -> np.ndarray:
    """Orthonormal basis (columns) of the span of the leading pilot block."""
    if not 1 <= m_dagger <= family.p:
        raise DimensionMismatch(f"pilot dimension {m_dagger} outside 1..{family.p}")
    block = family.design.leading_block(m_dagger)
    _, svals, vt = np.linalg.svd(block, full_matrices=False)
    if svals.size == 0 or svals[0] <= 0.0:
        raise SingularGram(m_dagger, f"pilot block {m_dagger} has no positive spectrum")
    keep = svals > GRAM_CUTOFF * svals[0]
    return vt[keep].T


def presmooth(family: ModelFamily, y, m_dagger: int) -> PresmoothResult:
    """Project the data onto the leading pilot block and keep the residuals."""
    y = np.asarray(y, dtype=float)
    if y.shape != (family.n,):
        raise DimensionMismatch("data vector must have length n")
    basis = pilot_basis(family, m_dagger)
    residuals = y - basis @ (basis.T @ y)
    # Second projection pass pins the residual orthogonality to the span.
    residuals = residuals - basis @ (basis.T @ residuals)
    floor = RESIDUAL_FLOOR * float(np.max(np.abs(y), initial=0.0))
    negligible = bool(np.max(np.abs(residuals), initial=0.0) <= floor)
    return PresmoothResult(
        residuals=residuals,
        projector_dim=int(m_dagger),
        basis=basis,
        negligible=negligible,
    )


def _residual_vector(residuals, n: int) -> np.ndarray:
    if isinstance(residuals, PresmoothResult):
        if residuals.negligible:
            raise AllZeroResiduals("presmoothing left no residual signal")
        vec = residuals.residuals
    else:
        vec = np.asarray(residuals, dtype=float)
    if vec.shape != (n,):
        raise DimensionMismatch("residual vector must have length n")
    if np.all(vec == 0.0):
        raise AllZeroResiduals("all residuals are zero; calibration is degenerate")
    return vec


def bootstrap_joint_draws(
    family: ModelFamily,
    residuals,
    n_sim: int,
    seed: int,
    pairs=None,
    n_workers: int = 1,
    stream_tag: int = 0,
) -> JointDrawMatrix:
    """Joint pairwise magnitudes under residual-multiplier noise.

    Row ``r`` multiplies the residuals coordinatewise by one standard
    normal weight vector shared across all pairs.
    """
    if n_sim < 1:
        raise DimensionMismatch("n_sim must be >= 1")
    vec = _residual_vector(residuals, family.n)
    pairs = list(pairs) if pairs is not None else family.pairs()
    return _sample_scaled_norms(family, vec, n_sim, seed, pairs, n_workers, stream_tag)


def _weighted_column_dims(op: np.ndarray, weights2: np.ndarray) -> float:
    return float(np.einsum("qi,qi,i->", op, op, weights2))


def bootstrap_effective_dims(
    family: ModelFamily, residuals, pairs=None
) -> dict[tuple[int, int], float]:
    """Data-driven effective dimensions: residual-weighted column masses."""
    vec = _residual_vector(residuals, family.n)
    w2 = vec**2
    pairs = list(pairs) if pairs is not None else family.pairs()
    return {
        (m, m_ref): _weighted_column_dims(family.pair_operator(m, m_ref), w2)
        for m, m_ref in pairs
    }


def bootstrap_single_dims(family: ModelFamily, residuals) -> dict[int, float]:
    """Single-model analog of the effective dimensions."""
    vec = _residual_vector(residuals, family.n)
    w2 = vec**2
    return {m: _weighted_column_dims(family.operator(m), w2) for m in family.models}


@dataclass(frozen=True)
class BootstrapCalibrationTable(CalibrationTable):
    """Calibration table with data-driven effective dimensions attached."""

    p_boot: dict[tuple[int, int], float] | None = None

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["p_boot"] = {f"{m}:{mr}": v for (m, mr), v in sorted((self.p_boot or {}).items())}
        return d


def bootstrap_calibrate(
    family: ModelFamily,
    residuals,
    x_level: float,
    alpha_plus: float,
    n_sim: int,
    seed: int,
    pairs=None,
    n_workers: int = 1,
    mode: str = "probabilistic",
    power_a: float | None = None,
    stream_tag: int = 0,
) -> BootstrapCalibrationTable:
    """Full calibration on the residual-multiplier draw matrix.

    Identical machinery to the known-noise path above the draw source; the
    bias allowance uses the residual-weighted effective dimensions.
    """
    if alpha_plus < 0:
        raise DimensionMismatch("alpha_plus must be >= 0")
    vec = _residual_vector(residuals, family.n)
    draws = bootstrap_joint_draws(
        family, vec, n_sim, seed, pairs=pairs, n_workers=n_workers, stream_tag=stream_tag
    )
    p_boot = bootstrap_effective_dims(family, vec, pairs=list(draws.pair_index))

    if mode == "probabilistic":
        corrections = {
            m_ref: multiplicity_correction(draws, m_ref, x_level)
            for m_ref in draws.references()
        }
        for m_ref, q in corrections.items():
            bound = math.log(len(draws.comparisons(m_ref))) + Q_SLACK
            if q > bound:
                warnings.warn(
                    CalibrationWarning(
                        f"reference {m_ref}: correction {q:.4f} above the "
                        f"Bonferroni bound {bound:.4f}"
                    ),
                    stacklevel=2,
                )
        levels = {m_ref: x_level + q for m_ref, q in corrections.items()}
        per_model_levels = None
        table_mode = "probabilistic"
        a_out = None
    elif mode == "power_loss":
        if power_a is None:
            raise DimensionMismatch("power-loss mode needs the exponent a")
        params: PowerLossParams = power_loss_params(
            family.models, bootstrap_single_dims(family, vec), power_a
        )
        corrections = {m_ref: 0.0 for m_ref in draws.references()}
        levels = params.x
        per_model_levels = dict(params.x)
        table_mode = "power_loss"
        a_out = power_a
    else:
        raise DimensionMismatch(f"unknown calibration mode {mode!r}")

    critical, clipped = _pair_levels_and_thresholds(draws, levels, p_boot, alpha_plus)
    return BootstrapCalibrationTable(
        x_level=x_level,
        alpha_plus=alpha_plus,
        corrections=corrections,
        critical=critical,
        pair_dims=dict(p_boot),
        mode=table_mode,
        power_a=a_out,
        per_model_levels=per_model_levels,
        tail_clipped=clipped,
        n_sim=n_sim,
        seed=seed,
        p_boot=dict(p_boot),
    )


@dataclass(frozen=True)
class ValidityDiagnostics:
    """Closed-form error terms gauging how well the multiplier law mimics truth.

    Validation-only: every field needs the true noise covariance and
    response, so the estimation path can never touch this object.
    """

    delta_psi: float
    d_psi: float
    delta_one: float
    delta_eps: float
    bias_sup: float
    bias_l2: float
    delta2: float
    delta0: float
    delta0_scaled: float
    delta_p: float
    applicability_ratio: float
    asymptotic_regime_reached: bool
    p_dim: int
    n: int
    m_dagger: int
    x_level: float

    def to_dict(self) -> dict:
        return {
            "delta_psi": self.delta_psi,
            "d_psi": self.d_psi,
            "delta_one": self.delta_one,
            "delta_eps": self.delta_eps,
            "bias_sup": self.bias_sup,
            "bias_l2": self.bias_l2,
            "delta2": self.delta2,
            "delta0": self.delta0,
            "delta0_scaled": self.delta0_scaled,
            "delta_p": self.delta_p,
            "applicability_ratio": self.applicability_ratio,
            "asymptotic_regime_reached": self.asymptotic_regime_reached,
            "p_dim": self.p_dim,
            "n": self.n,
            "m_dagger": self.m_dagger,
            "x_level": self.x_level,
        }


def validity_diagnostics(
    family: ModelFamily,
    sigma: NoiseSpec,
    f_true,
    m_dagger: int,
    x_level: float,
) -> ValidityDiagnostics:
    """Evaluate the multiplier-calibration error terms for a known scenario.

    The relevant feature dimension is the largest model in the collection;
    the design block, pilot projector and noise covariance enter through
    the whitened quantities defined in the closed-form bounds.
    """
    if f_true is None or not sigma.is_known:
        raise RequiresKnownTruth("diagnostics need the true response and known noise")
    f = np.asarray(f_true, dtype=float)
    if f.shape != (family.n,):
        raise DimensionMismatch("f_true must have length n")
    variances = sigma.require_known()
    n = family.n
    p_dim = family.largest
    psi = family.design.leading_block(p_dim)
    sig = np.sqrt(variances)

    s_mat = (psi * variances) @ psi.T
    vals, vecs = np.linalg.eigh(s_mat)
    if vals.min() <= 0:
        raise SingularGram(p_dim, "noise-weighted Gram is degenerate")
    s_inv_half = (vecs / np.sqrt(vals)) @ vecs.T
    delta_psi = float(np.max(np.linalg.norm(s_inv_half @ psi, axis=0) * sig))

    basis = pilot_basis(family, m_dagger)
    proj = basis @ basis.T

    bias_vec = (f - proj @ f) / sig
    bias_sup = float(np.max(np.abs(bias_vec), initial=0.0))
    bias_l2 = float(np.linalg.norm(bias_vec))

    resid_op = np.eye(n) - proj
    var_smoothed = (resid_op * variances) @ resid_op.T / np.outer(sig, sig)
    var_smoothed = 0.5 * (var_smoothed + var_smoothed.T)
    gap = var_smoothed - np.eye(n)
    delta_one = float(np.max(np.abs(np.linalg.eigvalsh(gap))))
    delta_eps = float(np.max(np.abs(np.diag(gap))))

    upsilon = (proj * sig[None, :]) / sig[:, None]
    d_psi = float(np.max(np.linalg.norm(upsilon, axis=1)))

    x_n = x_level + math.log(n)
    x_p = x_level + math.log(2 * p_dim)
    x_m = x_level + 2.0 * math.log(len(family.models))

    delta2 = (
        2.0 * math.sqrt(delta_psi**2 * p_dim * x_n)
        + math.sqrt(delta_eps**2 * p_dim)
        + math.sqrt(bias_sup**4 * p_dim)
        + 4.0 * delta_psi**2 * bias_l2 * (1.0 + math.sqrt(x_level))
    )
    delta0 = (
        bias_sup**2
        + delta_psi**2 * bias_l2 * math.sqrt(2.0 * x_level)
        + 2.0 * d_psi * x_n
        + d_psi**2 * x_n
        + 2.0 * delta_psi * math.sqrt(x_p)
        + 2.0 * delta_psi**2 * x_p
    )
    delta_p = (
        bias_sup**2
        + 4.0 * math.sqrt(x_m) * delta_psi**2 * bias_l2
        + 4.0 * math.sqrt(x_m) * delta_psi
        + 4.0 * x_m * delta_psi**2
        + delta_eps
    )
    ratio = p_dim**2 * math.log(n) / n

    return ValidityDiagnostics(
        delta_psi=delta_psi,
        d_psi=d_psi,
        delta_one=delta_one,
        delta_eps=delta_eps,
        bias_sup=bias_sup,
        bias_l2=bias_l2,
        delta2=delta2,
        delta0=delta0,
        delta0_scaled=math.sqrt(p_dim) * delta0,
        delta_p=delta_p,
        applicability_ratio=ratio,
        asymptotic_regime_reached=bool(ratio <= 1.0),
        p_dim=p_dim,
        n=n,
        m_dagger=int(m_dagger),
        x_level=float(x_level),
    )
