"""Ordered families of linear estimators.

A family is built from a ``p x n`` design whose leading ``m`` rows define
the ``m``-th model, a weighting matrix ``W`` fixing the loss, and a strictly
increasing list of model sizes.  Each model ``m`` carries the estimator
operator ``K_m = W S_m`` where ``S_m`` is the least-squares operator of the
leading-``m`` block embedded into the full coefficient space by
zero-padding; differences ``K_m - K_ref`` are therefore plain matrix
subtractions and are cached on demand.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    NotOrderedPair,
    SingularGram,
    SingularGramWarning,
)

# Relative spectral cutoff for pseudo-inverting a Gram matrix.
GRAM_CUTOFF = 1e-10

# PSD tolerance used by the variance-ordering diagnostic.
PSD_TOL = 1e-8


@dataclass(frozen=True)
class DesignMatrix:
    """Feature vectors as columns of a ``p x n`` matrix."""

    entries: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.entries, dtype=float)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionMismatch("design must be a p x n matrix with p, n >= 1")
        if not np.all(np.isfinite(arr)):
            raise DimensionMismatch("design contains NaN/Inf entries")
        object.__setattr__(self, "entries", arr)

    @property
    def p(self) -> int:
        return self.entries.shape[0]

    @property
    def n(self) -> int:
        return self.entries.shape[1]

    def leading_block(self, m: int) -> np.ndarray:
        """Rows of the first ``m`` features."""
        if not 1 <= m <= self.p:
            raise DimensionMismatch(f"block size {m} outside 1..{self.p}")
        return self.entries[:m]

    def to_dict(self) -> dict:
        return {"p": self.p, "n": self.n, "entries": self.entries.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "DesignMatrix":
        arr = np.asarray(d["entries"], dtype=float)
        if arr.shape != (d["p"], d["n"]):
            raise DimensionMismatch("design entries do not match declared shape")
        return cls(arr)


@dataclass(frozen=True)
class WeightingScheme:
    """Loss weighting ``W`` (q x p).

    ``kind`` is one of ``full_vector`` (W = I_p), ``prediction``
    (W symmetric PSD with W^2 = sigma^-2 Psi Psi^T), ``subvector``
    (coordinate selector rows), ``linear_functional`` (single row), or
    ``custom`` (explicit matrix).
    """

    kind: str
    coords: tuple[int, ...] | None = None
    vector: np.ndarray | None = None
    matrix: np.ndarray | None = None
    sigma: float = 1.0

    @classmethod
    def full_vector(cls) -> "WeightingScheme":
        return cls(kind="full_vector")

    @classmethod
    def prediction(cls, sigma: float = 1.0) -> "WeightingScheme":
        if sigma <= 0:
            raise DimensionMismatch("prediction weighting needs sigma > 0")
        return cls(kind="prediction", sigma=float(sigma))

    @classmethod
    def subvector(cls, coords) -> "WeightingScheme":
        return cls(kind="subvector", coords=tuple(int(c) for c in coords))

    @classmethod
    def linear_functional(cls, vector) -> "WeightingScheme":
        return cls(kind="linear_functional", vector=np.asarray(vector, dtype=float))

    @classmethod
    def custom(cls, matrix) -> "WeightingScheme":
        return cls(kind="custom", matrix=np.asarray(matrix, dtype=float))

    def materialize(self, design: DesignMatrix) -> np.ndarray:
        """Return the explicit q x p weight matrix for this design."""
        p = design.p
        if self.kind == "full_vector":
            return np.eye(p)
        if self.kind == "prediction":
            fisher = design.entries @ design.entries.T / self.sigma**2
            vals, vecs = np.linalg.eigh(fisher)
            if vals.min() < -1e-10 * max(vals.max(), 1.0):
                raise DimensionMismatch("prediction Fisher matrix is not PSD")
            vals = np.clip(vals, 0.0, None)
            return (vecs * np.sqrt(vals)) @ vecs.T
        if self.kind == "subvector":
            assert self.coords is not None
            if any(not 0 <= c < p for c in self.coords):
                raise DimensionMismatch("subvector coordinates outside 0..p-1")
            W = np.zeros((len(self.coords), p))
            for i, c in enumerate(self.coords):
                W[i, c] = 1.0
            return W
        if self.kind == "linear_functional":
            assert self.vector is not None
            if self.vector.shape != (p,):
                raise DimensionMismatch("functional vector length must equal p")
            return self.vector.reshape(1, p)
        if self.kind == "custom":
            assert self.matrix is not None
            if self.matrix.ndim != 2 or self.matrix.shape[1] != p:
                raise DimensionMismatch("custom W must have p columns")
            return self.matrix
        raise DimensionMismatch(f"unknown weighting kind {self.kind!r}")


def _pinv_gram(gram: np.ndarray, m: int) -> tuple[np.ndarray, bool]:
    """Pseudo-inverse of a symmetric PSD Gram via truncated eigendecomposition.

    Returns the inverse and whether the spectrum was truncated.  An all-zero
    spectrum is a hard error: no meaningful estimator exists for the model.
    """
    vals, vecs = np.linalg.eigh(gram)
    top = vals.max() if vals.size else 0.0
    if top <= 0.0:
        raise SingularGram(m, f"model {m}: Gram matrix has no positive spectrum")
    cutoff = GRAM_CUTOFF * top
    keep = vals > cutoff
    inv_vals = np.where(keep, 1.0 / np.where(keep, vals, 1.0), 0.0)
    return (vecs * inv_vals) @ vecs.T, bool(np.any(~keep))


@dataclass
class ModelFamily:
    """Estimator family over an ordered model set."""

    design: DesignMatrix
    weighting: WeightingScheme
    models: tuple[int, ...]
    weight_matrix: np.ndarray
    operators: dict[int, np.ndarray]
    rank_deficient: tuple[int, ...] = ()
    _pair_cache: dict[tuple[int, int], np.ndarray] = field(default_factory=dict, repr=False)

    @property
    def q(self) -> int:
        return self.weight_matrix.shape[0]

    @property
    def n(self) -> int:
        return self.design.n

    @property
    def p(self) -> int:
        return self.design.p

    @property
    def largest(self) -> int:
        return self.models[-1]

    def operator(self, m: int) -> np.ndarray:
        try:
            return self.operators[m]
        except KeyError:
            raise NotOrderedPair(f"model {m} not in family") from None

    def pair_operator(self, m: int, m_ref: int) -> np.ndarray:
        """Difference operator ``K_m - K_ref`` for ``m > m_ref``; cached."""
        if m <= m_ref:
            raise NotOrderedPair(f"need m > m_ref, got ({m}, {m_ref})")
        if m not in self.operators or m_ref not in self.operators:
            raise NotOrderedPair(f"pair ({m}, {m_ref}) not in family")
        key = (m, m_ref)
        if key not in self._pair_cache:
            self._pair_cache[key] = self.operators[m] - self.operators[m_ref]
        return self._pair_cache[key]

    def pairs(self) -> list[tuple[int, int]]:
        """All ordered pairs ``(m, m_ref)`` with ``m > m_ref``, canonical order."""
        out = []
        for i, m_ref in enumerate(self.models):
            for m in self.models[i + 1 :]:
                out.append((m, m_ref))
        return out

    def successors(self, m_ref: int) -> list[int]:
        return [m for m in self.models if m > m_ref]

    def predecessor(self, m: int) -> int | None:
        smaller = [mm for mm in self.models if mm < m]
        return smaller[-1] if smaller else None


def build_projection_family(
    design: DesignMatrix,
    weighting: WeightingScheme,
    models,
) -> ModelFamily:
    """Construct the family of least-squares estimators on leading blocks.

    For each ``m`` the operator is ``K_m = W S_m`` where
    ``S_m = (Psi_m Psi_m^T)^+ Psi_m`` zero-padded from ``m`` to ``p`` rows.
    Rank-deficient Grams fall back to the pseudo-inverse and attach a
    ``SingularGramWarning``; an all-zero Gram raises ``SingularGram``.
    """
    models = tuple(int(m) for m in models)
    if not models:
        raise DimensionMismatch("model list is empty")
    if any(b <= a for a, b in zip(models, models[1:])):
        raise DimensionMismatch("model list must be strictly increasing")
    if models[0] < 1 or models[-1] > design.p:
        raise DimensionMismatch("model sizes must lie in 1..p")

    W = weighting.materialize(design)
    if W.shape[1] != design.p:
        raise DimensionMismatch("W columns must equal the feature dimension p")

    operators: dict[int, np.ndarray] = {}
    deficient: list[int] = []
    for m in models:
        block = design.leading_block(m)
        gram_inv, truncated = _pinv_gram(block @ block.T, m)
        if truncated:
            deficient.append(m)
            warnings.warn(
                SingularGramWarning(
                    f"model {m}: rank-deficient Gram, pseudo-inverse applied"
                ),
                stacklevel=2,
            )
        s_m = np.zeros((design.p, design.n))
        s_m[:m] = gram_inv @ block
        operators[m] = W @ s_m

    return ModelFamily(
        design=design,
        weighting=weighting,
        models=models,
        weight_matrix=W,
        operators=operators,
        rank_deficient=tuple(deficient),
    )


@dataclass(frozen=True)
class OrderingReport:
    """Variance-ordering verdicts for adjacent model pairs."""

    pair_ordered: dict[tuple[int, int], bool]
    min_eigenvalues: dict[tuple[int, int], float]
    ordered: bool


def check_ordering(family: ModelFamily, sigma, tol: float = PSD_TOL) -> OrderingReport:
    """Check that pairwise estimator variances grow along the model order.

    For each adjacent pair the gap ``V_next - V_m`` must be PSD up to
    ``tol * ||V_next||_op``.  Transitivity extends the verdict to all pairs.
    Diagnostic only; never raises on a negative verdict.
    """
    variances = np.asarray(sigma.variances, dtype=float)
    verdicts: dict[tuple[int, int], bool] = {}
    mins: dict[tuple[int, int], float] = {}
    for m_ref, m in zip(family.models, family.models[1:]):
        v_lo = _variance_matrix(family.operator(m_ref), variances)
        v_hi = _variance_matrix(family.operator(m), variances)
        gap_eigs = np.linalg.eigvalsh(v_hi - v_lo)
        scale = float(np.linalg.eigvalsh(v_hi)[-1]) if v_hi.size else 0.0
        ok = bool(gap_eigs[0] >= -tol * max(scale, 1e-300))
        verdicts[(m, m_ref)] = ok
        mins[(m, m_ref)] = float(gap_eigs[0])
    return OrderingReport(
        pair_ordered=verdicts,
        min_eigenvalues=mins,
        ordered=all(verdicts.values()) if verdicts else True,
    )


def _variance_matrix(op: np.ndarray, variances: np.ndarray) -> np.ndarray:
    v = (op * variances) @ op.T
    return 0.5 * (v + v.T)
