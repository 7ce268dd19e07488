"""Monte-Carlo calibration of the pairwise acceptance thresholds.

The joint law of all pairwise noise magnitudes is sampled once; empirical
tail quantiles, per-reference multiplicity corrections, and the final
critical values are all read off the same draw matrix, so the family-wise
propagation guarantee holds exactly in-sample.

Two threshold modes are provided: the probabilistic mode with a common
level plus multiplicity correction, and the power-loss mode where each
reference model carries its own level chosen to control an excess-risk
functional rather than a rejection probability.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadExponent,
    CalibrationWarning,
    DimensionMismatch,
    MissingPair,
    NotOrderedPair,
    TailTooDeepWarning,
)
from .family import ModelFamily
from .moments import NoiseSpec, PairMoments, single_variance
from .rng import block_bounds, stream

# Bisection resolution for multiplicity corrections.
Q_RESOLUTION = 1e-4

# Slack over the Bonferroni value allowed before a correction is suspicious.
Q_SLACK = 0.1

# Tails thinner than this many sample points trigger a thin-tail warning.
MIN_TAIL_POINTS = 10


@dataclass
class JointDrawMatrix:
    """Simulated pairwise noise magnitudes, one row per noise realization.

    Column ``pair_index[(m, m_ref)]`` holds the magnitude of the difference
    statistic for that pair; all columns of a row come from the same
    realization, preserving the joint law.
    """

    draws: np.ndarray
    pair_index: dict[tuple[int, int], int]
    seed: int
    n_sim: int
    _sorted: dict[int, np.ndarray] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.draws.shape != (self.n_sim, len(self.pair_index)):
            raise DimensionMismatch("draw matrix shape does not match pair index")
        if self.n_sim >= 1 and float(self.draws.min(initial=0.0)) < 0:
            raise DimensionMismatch("draws must be nonnegative magnitudes")

    def column(self, m: int, m_ref: int) -> np.ndarray:
        try:
            return self.draws[:, self.pair_index[(m, m_ref)]]
        except KeyError:
            raise MissingPair(f"pair ({m}, {m_ref}) not present in draws") from None

    def sorted_column(self, m: int, m_ref: int) -> np.ndarray:
        col = self.pair_index.get((m, m_ref))
        if col is None:
            raise MissingPair(f"pair ({m}, {m_ref}) not present in draws")
        if col not in self._sorted:
            self._sorted[col] = np.sort(self.draws[:, col])
        return self._sorted[col]

    def references(self) -> list[int]:
        """Reference models that have at least one comparison column."""
        return sorted({m_ref for (_, m_ref) in self.pair_index})

    def comparisons(self, m_ref: int) -> list[tuple[int, int]]:
        return sorted(
            [pair for pair in self.pair_index if pair[1] == m_ref],
            key=lambda pair: pair[0],
        )

    def restricted(self, pairs) -> "JointDrawMatrix":
        """View on a subset of pairs (shared rows, fresh column index)."""
        pairs = list(pairs)
        cols = [self.pair_index[p] for p in pairs]
        return JointDrawMatrix(
            draws=self.draws[:, cols].copy(),
            pair_index={p: i for i, p in enumerate(pairs)},
            seed=self.seed,
            n_sim=self.n_sim,
        )


def joint_norms_from_noise(
    family: ModelFamily, noise: np.ndarray, pairs=None
) -> np.ndarray:
    """Pairwise difference magnitudes for explicit noise rows (test hook)."""
    noise = np.atleast_2d(np.asarray(noise, dtype=float))
    if noise.shape[1] != family.n:
        raise DimensionMismatch("noise rows must have length n")
    pairs = list(pairs) if pairs is not None else family.pairs()
    needed = sorted({m for pair in pairs for m in pair})
    outputs = {m: noise @ family.operator(m).T for m in needed}
    out = np.empty((noise.shape[0], len(pairs)))
    for j, (m, m_ref) in enumerate(pairs):
        out[:, j] = np.linalg.norm(outputs[m] - outputs[m_ref], axis=1)
    return out


def _fill_blocks(n_sim, seed, n, scale, worker, n_workers, stream_tag=0):
    """Run ``worker(gen_block, start, stop)`` over canonical row blocks.

    Block ``b`` always reads stream ``(seed, stream_tag, b)``, so the
    result is bit-identical for any worker count.
    """
    blocks = block_bounds(n_sim)

    def run(block):
        b, start, stop = block
        z = stream(seed, stream_tag, b).standard_normal((stop - start, n))
        worker(z * scale, start, stop)

    if n_workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            list(pool.map(run, blocks))
    else:
        for block in blocks:
            run(block)


def _sample_scaled_norms(
    family: ModelFamily,
    scale: np.ndarray,
    n_sim: int,
    seed: int,
    pairs,
    n_workers: int,
    stream_tag: int = 0,
) -> JointDrawMatrix:
    """Draw matrix for noise ``scale * N(0, I_n)`` rows.

    Shared core of the known-noise and residual-multiplier paths: the two
    differ only in the per-coordinate scale vector.
    """
    pairs = list(pairs)
    draws = np.empty((n_sim, len(pairs)))
    needed = sorted({m for pair in pairs for m in pair})
    ops = {m: family.operator(m).T for m in needed}

    def worker(noise_block, start, stop):
        outputs = {m: noise_block @ ops[m] for m in needed}
        for j, (m, m_ref) in enumerate(pairs):
            draws[start:stop, j] = np.linalg.norm(outputs[m] - outputs[m_ref], axis=1)

    _fill_blocks(n_sim, seed, family.n, scale, worker, n_workers, stream_tag)
    return JointDrawMatrix(
        draws=draws,
        pair_index={p: i for i, p in enumerate(pairs)},
        seed=seed,
        n_sim=n_sim,
    )


def sample_joint_draws(
    family: ModelFamily,
    sigma: NoiseSpec,
    n_sim: int,
    seed: int,
    pairs=None,
    n_workers: int = 1,
    stream_tag: int = 0,
) -> JointDrawMatrix:
    """Simulate the joint law of all pairwise noise magnitudes.

    Row ``r`` holds the magnitudes of every difference statistic under one
    realization of centered Gaussian noise with the known covariance;
    deterministic given ``seed``, bit-identical for any ``n_workers``.
    """
    if n_sim < 1:
        raise DimensionMismatch("n_sim must be >= 1")
    scale = np.sqrt(sigma.require_known())
    pairs = list(pairs) if pairs is not None else family.pairs()
    return _sample_scaled_norms(family, scale, n_sim, seed, pairs, n_workers, stream_tag)


def _quantile_at(sorted_col: np.ndarray, t: float) -> tuple[float, bool]:
    """Empirical tail value at level ``e^-t``; flags out-of-sample requests.

    The rank is the upper order statistic ceil((1 - e^-t) n): the smallest
    sample value whose strict empirical exceedance is at most ``e^-t``.
    Degenerate ranks (t = 0, full mass) and tails deeper than the sample
    both clip to the maximum draw and are flagged.
    """
    n = sorted_col.shape[0]
    tail = math.exp(-t)
    clipped = tail < 1.0 / n
    k = math.ceil((1.0 - tail) * n)
    if k < 1:
        return float(sorted_col[-1]), True
    k = min(k, n)
    return float(sorted_col[k - 1]), clipped


def tail_quantile(draws: JointDrawMatrix, m: int, m_ref: int, t: float) -> float:
    """Empirical tail function of one pair at exceedance level ``e^-t``."""
    if t < 0:
        raise DimensionMismatch("tail level t must be >= 0")
    sorted_col = draws.sorted_column(m, m_ref)
    value, clipped = _quantile_at(sorted_col, t)
    if clipped:
        warnings.warn(
            TailTooDeepWarning(
                f"pair ({m}, {m_ref}): tail level exp(-{t:g}) outside the "
                f"{draws.n_sim}-sample; returning the maximum draw"
            ),
            stacklevel=2,
        )
    elif math.exp(-t) * draws.n_sim < MIN_TAIL_POINTS:
        warnings.warn(
            CalibrationWarning(
                f"pair ({m}, {m_ref}): fewer than {MIN_TAIL_POINTS} tail points "
                f"support the requested level"
            ),
            stacklevel=2,
        )
    return value


def familywise_exceedance(
    draws: JointDrawMatrix, m_ref: int, thresholds: dict[tuple[int, int], float]
) -> float:
    """Fraction of rows where any comparison against ``m_ref`` exceeds its threshold.

    Exceedance is strict, mirroring the selector's rejection rule; for
    continuous draws this matches the non-strict convention almost surely.
    """
    pairs = draws.comparisons(m_ref)
    if not pairs:
        raise NotOrderedPair(f"no comparisons available for reference {m_ref}")
    cols = np.array([draws.pair_index[p] for p in pairs])
    z = np.array([thresholds[p] for p in pairs])
    return float(np.mean(np.any(draws.draws[:, cols] > z[None, :], axis=1)))


def multiplicity_correction(
    draws: JointDrawMatrix,
    m_ref: int,
    x_level: float,
    resolution: float = Q_RESOLUTION,
) -> float:
    """Smallest shift ``q`` making the family-wise exceedance at most ``e^-x``.

    Solved by bisection on the shared draw rows, so the propagation
    condition holds exactly in-sample.  A single comparison needs no
    correction and returns 0 exactly.
    """
    pairs = draws.comparisons(m_ref)
    if not pairs:
        raise NotOrderedPair(f"reference {m_ref} has no larger models to test against")
    if len(pairs) == 1:
        return 0.0

    cols = np.array([draws.pair_index[p] for p in pairs])
    sub = draws.draws[:, cols]
    sorted_cols = [draws.sorted_column(*p) for p in pairs]
    target = math.exp(-x_level)

    def fwe(q: float) -> float:
        z = np.array([_quantile_at(sc, x_level + q)[0] for sc in sorted_cols])
        return float(np.mean(np.any(sub > z[None, :], axis=1)))

    if fwe(0.0) <= target:
        return 0.0
    lo, hi = 0.0, math.log(len(pairs)) + 1.0
    if fwe(hi) > target:
        # Unreachable for strict exceedance (the Bonferroni point already
        # meets the target in-sample); kept as a guard for degenerate draws.
        warnings.warn(
            CalibrationWarning(
                f"reference {m_ref}: family-wise target not reachable, "
                f"returning the domain endpoint"
            ),
            stacklevel=2,
        )
        return hi
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if fwe(mid) <= target:
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True)
class CalibrationTable:
    """Acceptance thresholds for every ordered pair.

    ``critical[(m, m_ref)]`` is compared against the observed difference
    statistic; ``pair_dims`` holds the effective dimension entering the
    bias allowance ``alpha_plus * sqrt(dim)``.
    """

    x_level: float
    alpha_plus: float
    corrections: dict[int, float]
    critical: dict[tuple[int, int], float]
    pair_dims: dict[tuple[int, int], float]
    mode: str
    moments: dict[tuple[int, int], PairMoments] | None = None
    power_a: float | None = None
    per_model_levels: dict[int, float] | None = None
    tail_clipped: tuple[tuple[int, int], ...] = ()
    n_sim: int | None = None
    seed: int | None = None

    def threshold(self, m: int, m_ref: int) -> float:
        try:
            return self.critical[(m, m_ref)]
        except KeyError:
            raise MissingPair(f"no critical value for pair ({m}, {m_ref})") from None

    def pairs(self) -> list[tuple[int, int]]:
        return sorted(self.critical, key=lambda p: (p[1], p[0]))

    def to_dict(self) -> dict:
        d = {
            "mode": self.mode,
            "x_level": self.x_level,
            "alpha_plus": self.alpha_plus,
            "corrections": {str(k): v for k, v in sorted(self.corrections.items())},
            "critical": {f"{m}:{mr}": v for (m, mr), v in sorted(self.critical.items())},
            "pair_dims": {f"{m}:{mr}": v for (m, mr), v in sorted(self.pair_dims.items())},
            "tail_clipped": [f"{m}:{mr}" for (m, mr) in self.tail_clipped],
            "n_sim": self.n_sim,
            "seed": self.seed,
        }
        if self.power_a is not None:
            d["power_a"] = self.power_a
        if self.per_model_levels is not None:
            d["per_model_levels"] = {str(k): v for k, v in sorted(self.per_model_levels.items())}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CalibrationTable":
        def pair(key: str) -> tuple[int, int]:
            m, mr = key.split(":")
            return int(m), int(mr)

        return cls(
            x_level=float(d["x_level"]),
            alpha_plus=float(d["alpha_plus"]),
            corrections={int(k): float(v) for k, v in d["corrections"].items()},
            critical={pair(k): float(v) for k, v in d["critical"].items()},
            pair_dims={pair(k): float(v) for k, v in d["pair_dims"].items()},
            mode=d["mode"],
            power_a=d.get("power_a"),
            per_model_levels={int(k): float(v) for k, v in d["per_model_levels"].items()}
            if d.get("per_model_levels")
            else None,
            tail_clipped=tuple(pair(k) for k in d.get("tail_clipped", [])),
            n_sim=d.get("n_sim"),
            seed=d.get("seed"),
        )


def _pair_levels_and_thresholds(draws, levels, pair_dims, alpha_plus):
    """Thresholds z(level) + alpha_plus sqrt(dim) for every pair in ``draws``."""
    critical: dict[tuple[int, int], float] = {}
    clipped: list[tuple[int, int]] = []
    for (m, m_ref), _ in sorted(draws.pair_index.items(), key=lambda kv: kv[1]):
        sorted_col = draws.sorted_column(m, m_ref)
        z, was_clipped = _quantile_at(sorted_col, levels[m_ref])
        if was_clipped:
            clipped.append((m, m_ref))
        critical[(m, m_ref)] = z + alpha_plus * math.sqrt(pair_dims[(m, m_ref)])
    if clipped:
        warnings.warn(
            TailTooDeepWarning(
                f"{len(clipped)} pair(s) clipped to the maximum draw: "
                + ", ".join(f"({m},{mr})" for m, mr in clipped[:5])
                + ("..." if len(clipped) > 5 else "")
            ),
            stacklevel=3,
        )
    return critical, tuple(clipped)


def critical_values(
    draws: JointDrawMatrix,
    moments: dict[tuple[int, int], PairMoments],
    x_level: float,
    alpha_plus: float = 0.0,
) -> CalibrationTable:
    """Probabilistic-mode table: corrected tail value plus bias allowance."""
    if alpha_plus < 0:
        raise DimensionMismatch("alpha_plus must be >= 0")
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
    pair_dims = {pair: moments[pair].p_pair for pair in draws.pair_index}
    levels = {m_ref: x_level + q for m_ref, q in corrections.items()}
    critical, clipped = _pair_levels_and_thresholds(draws, levels, pair_dims, alpha_plus)
    return CalibrationTable(
        x_level=x_level,
        alpha_plus=alpha_plus,
        corrections=corrections,
        critical=critical,
        pair_dims=pair_dims,
        mode="probabilistic",
        moments=dict(moments),
        tail_clipped=clipped,
        n_sim=draws.n_sim,
        seed=draws.seed,
    )


@dataclass(frozen=True)
class PowerLossParams:
    """Per-model excess-risk budgets and per-reference levels."""

    a: float
    alpha: dict[int, float]
    x: dict[int, float]


def power_loss_params(models, p_singles, a: float) -> PowerLossParams:
    """Budgets ``alpha_m`` and levels ``x_ref`` from single-model dimensions.

    For each model ``m`` with predecessor ``ref``, the level attached to
    ``ref`` is ``2 (1 + a) log(p_m / p_min)`` and the budget for ``m`` is
    ``sqrt(3) (p_m / p_min)^(-1-a)``; the level indexing follows the
    next-smaller-model convention.
    """
    if a <= 0:
        raise BadExponent("power-loss exponent a must be > 0")
    models = [int(m) for m in models]
    dims = {m: float(p_singles[m]) for m in models}
    vals = [dims[m] for m in models]
    if min(vals) <= 0:
        raise DimensionMismatch("single-model dimensions must be > 0")
    if any(b < a_ for a_, b in zip(vals, vals[1:])):
        raise DimensionMismatch("single-model dimensions must be nondecreasing")
    p0 = dims[models[0]]
    alpha = {m: math.sqrt(3.0) * (dims[m] / p0) ** (-1.0 - a) for m in models}
    x = {
        ref: 2.0 * (1.0 + a) * math.log(dims[m] / p0)
        for ref, m in zip(models, models[1:])
    }
    return PowerLossParams(a=a, alpha=alpha, x=x)


def power_loss_critical_values(
    draws: JointDrawMatrix,
    moments: dict[tuple[int, int], PairMoments],
    params: PowerLossParams,
    alpha_plus: float = 0.0,
) -> CalibrationTable:
    """Power-loss-mode table: per-reference levels, no multiplicity shift."""
    if alpha_plus < 0:
        raise DimensionMismatch("alpha_plus must be >= 0")
    for m_ref in draws.references():
        if m_ref not in params.x:
            raise MissingPair(f"power-loss level missing for reference {m_ref}")
    pair_dims = {pair: moments[pair].p_pair for pair in draws.pair_index}
    critical, clipped = _pair_levels_and_thresholds(draws, params.x, pair_dims, alpha_plus)
    return CalibrationTable(
        x_level=0.0,
        alpha_plus=alpha_plus,
        corrections={m_ref: 0.0 for m_ref in draws.references()},
        critical=critical,
        pair_dims=pair_dims,
        mode="power_loss",
        moments=dict(moments),
        power_a=params.a,
        per_model_levels=dict(params.x),
        tail_clipped=clipped,
        n_sim=draws.n_sim,
        seed=draws.seed,
    )


@dataclass(frozen=True)
class ExcessRiskEstimate:
    value: float
    stderr: float
    n_sim: int


def excess_risk_mc(
    family: ModelFamily,
    sigma: NoiseSpec,
    m: int,
    x_candidate: float,
    n_sim: int,
    seed: int,
    n_workers: int = 1,
) -> ExcessRiskEstimate:
    """Monte-Carlo excess-risk functional for model ``m`` at a trial level.

    Averages ``max(|xi_m|^2 / p_m, 1)`` over the event that any comparison
    against the predecessor of ``m`` exceeds its tail value at
    ``x_candidate``; the tail values come from the same simulated rows.
    A level at or below zero means a full-mass threshold: the indicator is
    identically one.
    """
    m_prev = family.predecessor(m)
    if m_prev is None:
        raise NotOrderedPair(f"model {m} has no predecessor in the family")
    variances = sigma.require_known()
    scale = np.sqrt(variances)
    succ = family.successors(m_prev)
    pairs = [(mp, m_prev) for mp in succ]
    pair_ops = {mp: family.pair_operator(mp, m_prev).T for mp in succ}
    own_op = family.operator(m).T

    pair_norms = np.empty((n_sim, len(pairs)))
    own_norm2 = np.empty(n_sim)

    def worker(noise_block, start, stop):
        for j, mp in enumerate(succ):
            pair_norms[start:stop, j] = np.linalg.norm(noise_block @ pair_ops[mp], axis=1)
        own_norm2[start:stop] = np.sum((noise_block @ own_op) ** 2, axis=1)

    _fill_blocks(n_sim, seed, family.n, scale, worker, n_workers)

    p_m = single_variance(family, sigma, m).p_pair
    if x_candidate <= 0:
        fired = np.ones(n_sim, dtype=bool)
    else:
        z = np.array(
            [_quantile_at(np.sort(pair_norms[:, j]), x_candidate)[0] for j in range(len(pairs))]
        )
        fired = np.any(pair_norms > z[None, :], axis=1)
    integrand = np.maximum(own_norm2 / p_m, 1.0) * fired
    value = float(integrand.mean())
    stderr = float(integrand.std(ddof=1) / math.sqrt(n_sim)) if n_sim > 1 else float("inf")
    return ExcessRiskEstimate(value=value, stderr=stderr, n_sim=n_sim)
